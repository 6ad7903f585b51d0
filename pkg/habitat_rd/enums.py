from enum import Enum


class BuiltinModel(Enum):
    CrossSpeciesEpidemic = 'ex1'
    OverlapBinding = 'ex2'
    QuadraticExchange1D = 'ex3'


class InitialKind(Enum):
    Constant = 'const'
    Gaussian = 'gauss'


class LinearSolverKind(Enum):
    Tridiagonal = 'tridiagonal'
    ConjugateGradient = 'cg'


class LowerEntrySign(Enum):
    Any = 'any'
    NonNegative = 'nonneg'


class Subcommand(Enum):
    Run = 'run'
    Check = 'check'
    Energy = 'energy'
    SweepEpsilon = 'sweep-epsilon'
    Builtin = 'builtin'


class LPStatus(Enum):
    Optimal = 'optimal'
    Infeasible = 'infeasible'
    Unbounded = 'unbounded'
    IterationLimit = 'iteration_limit'
