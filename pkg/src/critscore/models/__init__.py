from .expmix import ExpMixData, ExpMixModel
from .lmm import LmmData, LmmModel
from .toy import ToyData, ToyModel

__all__ = ["ExpMixData", "ExpMixModel", "LmmData", "LmmModel", "ToyData", "ToyModel"]
