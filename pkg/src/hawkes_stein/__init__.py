"""Poisson-imbedding simulation of Hawkes-type point processes with
Malliavin-style couplings, and empirical verification of Gaussian
convergence rates in Wasserstein distance."""

from .driving import Atom, BoxStep, CellIndex, Configuration, DrivingMeasure, divergence
from .models import (Discrete, EmptyHistory, Kernel, Link, LocallyStationary,
                     NearlyUnstable, Stationaryized, derived_constants,
                     suggested_burn_in, validate)
from .simulate import (DiscretePath, EventPath, IntensityEvaluator,
                       compensator, completeness_rescan, simulate,
                       simulate_coupled, simulate_discrete,
                       simulate_inhomogeneous)
from .functionals import (BoundTerms, FunctionalSample, bound_terms,
                          functional_discrete, functional_nearly,
                          functional_reduced, functional_standard,
                          malliavin_derivative, sample_discrete,
                          sample_functional)
from .volterra import (GridFunction, ResolventGrid, convolve,
                       mean_intensity_nearly_unstable, resolvent,
                       resolvent_series, solve_volterra)
from .wasserstein import (RateFit, bootstrap_se, fit_rate, gaussian_w1_floor,
                          w1_empirical, w1_to_gaussian)

__version__ = "0.1.0"
