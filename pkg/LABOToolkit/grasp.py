"""The grasp evaluator: episodes, rewards, the perturbation test and the
design score.

An episode places the task object in front of the hand, closes the fingers
for ``close_steps`` kinematic steps and then pushes the object from
``n_directions`` world-horizontal directions, ``perturb_steps`` steps each.
Success means the object stays within the grasp type's vicinity bounds for
every push.

    >>> suite = LABOToolkit.build_suite(20, 0)
    >>> report = LABOToolkit.score(theta, suite, seed=0)
    >>> report.F, report.p
"""
import math
from dataclasses import dataclass, field, fields
from typing import Optional
import numpy as np
from joblib import Parallel, delayed
from LABOToolkit.utils import GeometryError, LABOClientError, SeedTree, maybe_log
from LABOToolkit.encoders import serialize
from LABOToolkit.layout import GRASP_TYPES, Rejection, decode, morphology_cost
from LABOToolkit.shapes import Placed
from LABOToolkit.hand import Hand, close_hand
from LABOToolkit.wrench import grasp_matrix, resist, is_resisted

GRAVITY = 9.81
COST_WEIGHT = 0.1
REFERENCE_EFFORT = 4000.0
REWARD_VARIANTS = ("icra","v1")


@serialize
@dataclass
class GraspConfig:
    """Settings of the grasp evaluator (the ``grasp`` config section)."""
    reward_variant: str = "icra"
    close_steps: int = 2000
    dt: float = 1.0/240.0
    perturb_steps: int = 100
    n_directions: int = 8
    force_range: tuple = (500.0,1000.0)
    stiffness: float = 500.0
    friction_edges: int = 8
    contact_tol: float = 0.02
    collision_stride: int = 20
    contact_stride: int = 8
    lift_height: float = 0.1
    displacement_cap: float = 2.0

    def __post_init__(self):
        if self.reward_variant not in REWARD_VARIANTS:
            raise LABOClientError(f"unknown reward variant {self.reward_variant}")
        self.force_range = tuple(float(x) for x in self.force_range)

    @classmethod
    def from_dict(cls,data):
        names = {f.name for f in fields(cls)}
        return cls(**{k : v for k,v in (data or {}).items() if k in names})


@dataclass
class StepState:
    """Quantities the per-step reward depends on.

    c_s is the self-collision indicator, r_o the fraction of fingertips in
    contact, d_pos and d_orn the object displacement and reorientation.
    """
    c_s: float = 0.0
    r_o: float = 0.0
    d_pos: float = 0.0
    d_orn: float = 0.0


def step_reward(state,grasp_type):
    """Per-step reward.

    power / pinch: -0.01 c_s + 0.1 r_o - 0.1 d_pos
    lateral: -0.01 c_s + 0.1 r_o - 0.05 d_pos - 0.05 d_orn
    """
    if grasp_type == "lateral":
        return -0.01*state.c_s + 0.1*state.r_o - 0.05*state.d_pos - 0.05*state.d_orn
    if grasp_type in ("power","pinch"):
        return -0.01*state.c_s + 0.1*state.r_o - 0.1*state.d_pos
    raise LABOClientError(f"unknown grasp type {grasp_type}")


def closing_reward_v1(c_s,r_o):
    """Closing phase step reward of the two phase reward."""
    return -0.01*c_s + 0.01*r_o


def perturbation_reward_v1(vicinity,magnitude,r_o):
    """Perturbation phase step reward of the two phase reward."""
    v = 1.0 if vicinity else 0.0
    return v*magnitude*1e-5 - 0.05*(1.0 - v) + r_o*1e-5


def vicinity_check(delta,d_orn,grasp_type):
    """Whether the object stayed near the hand.

    Args:
        delta: world frame object displacement (x, y, z)
        d_orn: reorientation angle, radians
    """
    dx, dy, dz = abs(float(delta[0])), abs(float(delta[1])), float(delta[2])
    if grasp_type == "power":
        return dx <= 3.0 and dy <= 3.0 and abs(dz) <= 1.0
    if grasp_type == "pinch":
        return dz >= 0.05 and dx <= 2.0 and dy <= 2.0
    return d_orn < 2.5 and dx <= 3.0 and dy <= 3.0 and abs(dz) <= 0.3


@dataclass
class GraspState:
    """Contacts holding the object at the end of closing, in the hand frame.

    ``normals`` point into the object (the direction fingers push).
    """
    points: np.ndarray
    normals: np.ndarray
    center: np.ndarray
    mu: float
    gain: float
    mass: float
    tip_ratio: float
    hand_pose: np.ndarray
    n_palm: int = 0

    def matrix(self,edges):
        return grasp_matrix(self.points,self.normals,self.center,self.mu,edges)


@dataclass
class PerturbationOutcome:
    """Result of the perturbation test, one entry per direction."""
    survived: int
    vicinity_flags: list
    magnitudes: np.ndarray
    d_pos: np.ndarray
    d_orn: np.ndarray
    held: bool = True


def perturbation_test(grasp_state,grasp_type,seed,config=None):
    """Pushes the held object from every direction and checks the vicinity.

    The load m_f u, m_f ~ U(force_range), acts at the object centre. The part
    of it the contact wrench cone cannot balance moves the object by
    residual / (stiffness gain); the residual moment turns it by the same
    scaling. A direction survives only when the cone balances the load and
    the resulting pose stays inside the vicinity bounds. Without fingertip
    contact the object is free and every direction fails.

    Returns:
        PerturbationOutcome
    """
    config = config or GraspConfig()
    rng = np.random.default_rng(seed)
    k = config.n_directions
    magnitudes = rng.uniform(*config.force_range,size=k)
    cap = config.displacement_cap
    if grasp_state.tip_ratio <= 0.0:
        return PerturbationOutcome(0,[False]*k,magnitudes,np.full(k,cap),np.full(k,cap),False)
    R = grasp_state.hand_pose
    G = grasp_state.matrix(config.friction_edges)
    compliance = 1.0/(config.stiffness*grasp_state.gain)
    lift = 0.0
    held = True
    if grasp_type == "pinch":
        gravity = np.concatenate([R.T @ np.array([0.0,0.0,-grasp_state.mass*GRAVITY]),np.zeros(3)])
        _, residual = resist(G,gravity)
        held = is_resisted(residual,gravity)
        lift = config.lift_height if held else 0.0
    flags, d_pos, d_orn = [], [], []
    for i in range(k):
        angle = 2*math.pi*i/k
        push = np.array([math.cos(angle),math.sin(angle),0.0])*magnitudes[i]
        load = np.concatenate([R.T @ push,np.zeros(3)])
        _, residual = resist(G,load)
        shift = R @ (residual[:3]*compliance)
        turn = float(np.linalg.norm(residual[3:])*compliance)
        delta = shift + np.array([0.0,0.0,lift])
        if grasp_type == "pinch" and not held:
            delta[2] = 0.0
        resisted = is_resisted(residual,load)
        flags.append(bool(resisted and vicinity_check(delta,turn,grasp_type)))
        d_pos.append(float(np.linalg.norm(shift)))
        d_orn.append(turn)
    return PerturbationOutcome(int(sum(flags)),flags,magnitudes,np.array(d_pos),np.array(d_orn),held)


def place_object(obj,grasp_type,base_height):
    """Poses an object on the palm axis in the hand frame.

    The object rests on the palm for power grasps; pinch and lateral grasps
    leave a clearance of 0.75 (1 + base_height) between palm and object.
    """
    R = obj.rotation
    clearance = 0.0 if grasp_type == "power" else 0.75*(1.0 + base_height)
    down = obj.shape.support(R.T @ np.array([0.0,0.0,-1.0]))
    position = np.array([obj.position[0],obj.position[1],clearance + down])
    return Placed(obj.shape,R,position)


def palm_contacts(placed,tol):
    """Object points touching the palm plane; the palm pushes along +z."""
    lowest = -placed.support(np.array([0.0,0.0,-1.0]))
    if lowest > tol:
        return np.zeros((0,3))
    pts = placed.extreme_points(np.array([0.0,0.0,-1.0]),tol)
    return pts[:8]


def grasp_state(hand,closing,placed,task,config):
    """Collects the contacts holding the object after closing."""
    points, normals = [], []
    tol = config.contact_tol
    for finger,q in zip(hand.fingers,closing.final_q):
        obj, _ = finger.clearances(q,placed)
        for link in np.flatnonzero(obj <= tol):
            p, n = finger.contact(q,placed,int(link))
            points.append(p)
            normals.append(-n)
    palm = palm_contacts(placed,tol)
    for p in palm:
        points.append(p)
        normals.append(np.array([0.0,0.0,1.0]))
    morph = hand.morph
    return GraspState(
        points=np.array(points).reshape(-1,3),
        normals=np.array(normals).reshape(-1,3),
        center=placed.position,
        mu=morph.friction_coefficient,
        gain=morph.joint_effort/REFERENCE_EFFORT,
        mass=task.object.mass,
        tip_ratio=closing.tip_ratio,
        hand_pose=task.hand_pose,
        n_palm=len(palm)
    )


@serialize
@dataclass
class EpisodeResult:
    """Outcome of one grasp episode."""
    episodic_reward: float
    success: bool
    contact_ratio_trace: np.ndarray
    self_collision_steps: int
    perturbation_survived: int
    vicinity_flags: list = field(default_factory=list)
    d_pos: np.ndarray = None
    d_orn: np.ndarray = None


def episode_reward(closing,outcome,grasp_type,config):
    """Sum of the step rewards over the closing and perturbation phases."""
    trace = closing.contact_ratio_trace()
    collisions = closing.collision_trace()
    c_final = 1.0 if closing.final_collision else 0.0
    r_final = closing.tip_ratio
    cap = config.displacement_cap
    if config.reward_variant == "v1":
        total = float(np.sum(closing_reward_v1(collisions,trace)))
        for flag,m in zip(outcome.vicinity_flags,outcome.magnitudes):
            total += config.perturb_steps*perturbation_reward_v1(flag,m,r_final)
        return total
    total = float(np.sum(-0.01*collisions + 0.1*trace))
    for d_pos,d_orn in zip(outcome.d_pos,outcome.d_orn):
        state = StepState(c_final,r_final,min(d_pos,cap),min(d_orn,cap))
        total += config.perturb_steps*step_reward(state,grasp_type)
    return total


def simulate_episode(morph,plan,task,seed,config=None):
    """Runs one closing episode and the perturbation test.

    Args:
        morph (HandMorphology): a hand that passed the rejection check
        plan (ControlPlan): its commands
        task (GraspTask): grasp type and object
        seed (int): seed of the perturbation magnitudes
        config (GraspConfig, optional): evaluator settings

    Returns:
        EpisodeResult

    Raises:
        GeometryError: if the hand intersects itself before closing
    """
    config = config or GraspConfig()
    hand = Hand(morph)
    placed = place_object(task.object,task.grasp_type,morph.base_height)
    closing = close_hand(hand,plan,task.grasp_type,placed,config)
    state = grasp_state(hand,closing,placed,task,config)
    outcome = perturbation_test(state,task.grasp_type,seed,config)
    return EpisodeResult(
        episodic_reward=episode_reward(closing,outcome,task.grasp_type,config),
        success=outcome.survived == config.n_directions,
        contact_ratio_trace=closing.contact_ratio_trace(),
        self_collision_steps=closing.self_collision_steps,
        perturbation_survived=outcome.survived,
        vicinity_flags=outcome.vicinity_flags,
        d_pos=outcome.d_pos,
        d_orn=outcome.d_orn
    )


@serialize
@dataclass
class ScoreReport:
    """Score of one design over a task list.

    F = mean(per_task_rewards) - 0.1 cost always holds, also for rejected
    designs, which carry the floor as every task reward and zero cost.
    """
    F: float
    cost: float
    per_task_rewards: np.ndarray
    p: np.ndarray
    per_type_success_rate: np.ndarray
    rejected: Optional[str] = None
    n_fingers: Optional[int] = None

    @classmethod
    def floor(cls,n_tasks,floor,rule,n_fingers=None):
        return cls(float(floor),0.0,np.full(n_tasks,float(floor)),np.zeros(n_tasks,dtype=int),
                   np.zeros(len(GRASP_TYPES)),rule,n_fingers)

    @property
    def success_rate(self):
        return float(np.mean(self.p)) if self.p.size else 0.0


def _type_rates(p,types):
    rates = []
    for grasp_type in GRASP_TYPES:
        bits = [b for b,t in zip(p,types) if t == grasp_type]
        rates.append(float(np.mean(bits)) if bits else 0.0)
    return np.array(rates)


def score(theta,suite,seed,config=None,layout=None,control_mode="velocity",min_angle_deg=12.0,
          floor=-1.0,split="train",workers=1,log=None):
    """Scores a design vector over a task suite.

    Rejected designs and hands that intersect themselves score ``floor`` with
    an all-zero success vector.

    Args:
        theta: 185 reals in [0,1]
        suite (TaskSuite): the tasks
        seed (int): seed of the per-task perturbation streams
        split (str, optional): ``train`` or ``test`` tasks
        workers (int, optional): episodes evaluated concurrently
        log (RecordSet, optional): receives a ``score`` record

    Returns:
        ScoreReport
    """
    config = config or GraspConfig()
    tasks = suite.tasks if split == "train" else suite.test_tasks
    decoded = decode(theta,layout,control_mode,min_angle_deg)
    if isinstance(decoded,Rejection):
        report = ScoreReport.floor(len(tasks),floor,decoded.rule,decoded.morphology.n_fingers)
        maybe_log(log,"score",{"F" : report.F, "rejected" : report.rejected},"design rejected")
        return report
    morph, plan = decoded
    seeds = SeedTree(seed)
    episodes = (delayed(simulate_episode)(morph,plan,tasks[i],seeds.integer("episode",i),config)
                for i in range(len(tasks)))
    try:
        results = Parallel(n_jobs=max(workers,1))(episodes)
    except GeometryError:
        report = ScoreReport.floor(len(tasks),floor,"GeometryError",morph.n_fingers)
        maybe_log(log,"score",{"F" : report.F, "rejected" : report.rejected},"hand intersects itself")
        return report
    rewards = np.array([r.episodic_reward for r in results])
    p = np.array([1 if r.success else 0 for r in results],dtype=int)
    cost = morphology_cost(morph)
    F = float(np.mean(rewards)) - COST_WEIGHT*cost if len(tasks) else -COST_WEIGHT*cost
    report = ScoreReport(F,cost,rewards,p,_type_rates(p,[t.grasp_type for t in tasks]),None,morph.n_fingers)
    maybe_log(log,"score",{"F" : F, "cost" : cost, "success_rate" : report.success_rate})
    return report


def evaluate_suite(theta,suite,seed,**kwargs):
    """Scores a design on both splits.

    Returns:
        (train ScoreReport, test ScoreReport)
    """
    kwargs.pop("split",None)
    return score(theta,suite,seed,split="train",**kwargs), score(theta,suite,seed,split="test",**kwargs)


def report_row(report):
    """Table row of a report: success rate per grasp type, overall rate, cost."""
    row = {t : float(r) for t,r in zip(GRASP_TYPES,report.per_type_success_rate)}
    row["overall"] = report.success_rate
    row["cost"] = float(report.cost)
    row["F"] = float(report.F)
    row["n_tasks"] = int(len(report.p))
    return row
