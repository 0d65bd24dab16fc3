"""Profit-driven decision trees for churn prediction."""

from .data import ColumnSchema, Dataset, FoldPlan, load_csv, stratified_split, synth_churn, write_csv
from .evaluate import ProfitParams, ProfitReport, ScoredSample, auc, empc, mer, mpc, profit_report
from .evolve import EvolveConfig, FitnessTrace, evolve, fitness
from .tree import Tree, TreeConstraints

__version__ = "0.1.0"
