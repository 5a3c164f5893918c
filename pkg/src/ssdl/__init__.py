"""Semi-supervised dictionary learning with dual graph regularisation.

Jointly learns a unit-norm dictionary, sparse codes for labelled and
unlabelled samples, and a linear classifier on the codes. Codes are kept
locally linear over the sample manifold and atoms smooth over a learned
feature graph.
"""

from .core import (Dataset, DivergenceError, Hyperparameters,
                   InvalidArgumentError, SingularSystemError, objective_value)
from .feature_graph import FeatureGraph, learn_feature_graph
from .lle_graph import (NeighborIndex, SampleGraph, build_sample_graph,
                        find_knn, lle_weights)
from .pipeline import (DG_DL, SS_DG_DL, EvalReport, TrainedModel, classify,
                       code_test_sample_dg_dl, evaluate, initialize,
                       knn_surrogate_classify, load_model, save_model,
                       train_dg_dl, train_ss_dg_dl)
from .solvers import (StepReport, classifier_update_step,
                      dictionary_update_step, sparse_coding_step)

__version__ = "0.1.0"
