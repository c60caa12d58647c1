from .combinatorics import IndexTuple, all_tuples, cancellation_case, qualifying_pairs, reduced_set
from .entropy import (DiscreteDistribution, change_of_law_check, ckp_check, relative_entropy,
                      relative_entropy_report, variational_entropy_check)
from .remainders import (FloorError, RemainderFields, cancellation_check, delta_trend, exp_moment_mc,
                         gamma_bounds, phi_theta, product_cancellation_bruteforce)
from .study import ChaosReport, StudyConfig, marginal_error_study
