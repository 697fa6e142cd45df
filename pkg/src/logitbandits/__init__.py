"""Loss-based confidence sets and optimistic policies for logistic and MNL bandits."""
from .agents import EpsGreedy, MNLUCBPlus, OFULogPlus, RadiusScaledOFULog, UniformRandom, make_agent
from .confidence import build_spec, gamma_mnl, radius_logistic, radius_mnl
from .env import Environment, LogisticEnvSpec, MNLEnvSpec, benchmark_instance
from .errors import ConfigurationError, SolverError
from .optim import mle_ball, ucb_max, ucb_max_batch

__version__ = "0.1.0"
