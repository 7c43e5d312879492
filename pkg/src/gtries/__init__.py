"""G-tries over random labelings of M-ary trees: exact moments, asymptotics
and Monte Carlo checks of the size distribution."""
from .errors import (AlphaTooSmall, BatchFailed, CapExceeded, Explosive, GTrieError,
                     NotAProbabilityVector, PoleAt, RootCheckFailed, TruncationNotCertified,
                     UniformCase, ValidationError)
from .model import (ModelParams, PeriodicityInfo, RootSet, detect_periodicity, p_func,
                    roots_on_critical_line, solve_rho, validate_params)

__version__ = "0.1.0"
