"""dB helpers. Powers are milliwatts internally; dBm and dB only at the edges."""
import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


def db_to_lin(x):
    return np.power(10.0, np.divide(x, 10.0))


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


dbm_to_mw = db_to_lin
mw_to_dbm = lin_to_db
