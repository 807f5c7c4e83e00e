from .measures import (BallScan, CantorSpec, GridMeasure, ball_condition_scan, build_cantor,
                       load_measure, mollify, point_mass, save_measure, sup_norm_scan)
from .spectrum import SpectrumGrid, annulus_energy, energy_exponent, grid_fourier
from .correlation import (NuEstimate, PairBudgetExceeded, PositivityReport, SpatialEstimate,
                          oracle_pair, positivity_report, tail_bound_scan, triple_correlation_freq,
                          triple_correlation_space)
