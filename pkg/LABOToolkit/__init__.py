"""LABOToolkit jointly optimizes robot hand morphology and grasp control by
Bayesian optimization in a learned latent space.

The modules follow the pipeline: layout decodes design vectors, objects and
grasp evaluate them, representation and gp drive the search, loop runs
experiments and report aggregates them. The utils module holds the error
classes, the event log and the seeded random streams every module uses:

    >>> import LABOToolkit
    >>> suite = LABOToolkit.build_suite(20, 6, seed=0)
    >>> LABOToolkit.score(theta, suite, seed=0).F
"""
from LABOToolkit.utils import *
from LABOToolkit.encoders import serialize, RecordEncoder, hash_of
from LABOToolkit.layout import (DesignLayout, Block, HandMorphology, ControlPlan, Rejection,
                                param_vector, decode, rejection_check, morphology_cost, pin_fingers)
from LABOToolkit.shapes import SphereShape, BoxShape, HullShape, Placed
from LABOToolkit.objects import (ObjectModel, GraspTask, TaskSuite, generate_objects, complexity_bin,
                                 build_suite, read_manifest, write_manifest, load_mesh_object)
from LABOToolkit.hand import Hand, Finger, close_hand
from LABOToolkit.wrench import grasp_matrix, resist, cone_contains
from LABOToolkit.grasp import (GraspConfig, StepState, EpisodeResult, ScoreReport, step_reward,
                               perturbation_test, simulate_episode, score, evaluate_suite)
from LABOToolkit.network import MLP
from LABOToolkit.representation import Representation, LatentCode, LabeledDesign, kl_term
from LABOToolkit.gp import Hyper, GPModel, BODataset, SurrogateConfig, matern_kernel, ucb, propose
from LABOToolkit.baselines import SearchTrace, CMAES, uniform_search, cmaes_search, raw_bo_search
from LABOToolkit.loop import RunConfig, RunLog, LABORunner, run, evaluate_design, make_score_fn
from LABOToolkit.report import ReportTable, aggregate
