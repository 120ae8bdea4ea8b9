"""The layout module defines the 185 dimensional design vector and turns it
into a physical hand. The vector lives in the unit hypercube; every block of
it is mapped onto the range of the hand property it controls:

    >>> layout = LABOToolkit.DesignLayout()
    >>> morph, plan = LABOToolkit.decode(theta, layout)

The first 122 entries describe the morphology, the last 63 the open loop
control (21 per grasp type).
"""
import math
import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Tuple
import numpy as np
import yaml
from LABOToolkit.utils import MalformedVector, LABOClientError
from LABOToolkit.encoders import serialize

GRASP_TYPES = ("power","pinch","lateral")
MAX_FINGERS = 6
SLOTS_PER_FINGER = 8
CONTROL_PER_TYPE = 21
SCHEMA_VERSION = 1

@serialize
@dataclass(frozen=True)
class Block:
    """A contiguous run of design dimensions.

    ``lo`` and ``hi`` are cycled over the block, so a block of interleaved
    (height, radius) pairs carries two-element bounds.
    """
    name: str
    offset: int
    length: int
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    integer: bool = False

    @property
    def stop(self):
        """Index one past the last dimension of the block."""
        return self.offset + self.length

    def bounds(self):
        """Per-dimension (lo, hi) arrays."""
        reps = self.length // len(self.lo)
        return np.tile(np.asarray(self.lo,float),reps), np.tile(np.asarray(self.hi,float),reps)

    def map(self,raw):
        """Maps raw unit values of this block onto its physical range.

        Continuous fields map affinely v -> lo + v (hi - lo); integer fields
        use floor binning with a top clamp so v = 1 lands on hi.
        """
        lo, hi = self.bounds()
        raw = np.asarray(raw,float)
        if self.integer:
            return np.minimum(lo + np.floor(raw*(hi-lo+1)),hi).astype(int)
        return lo + raw*(hi-lo)


DEFAULT_BLOCKS = (
    Block("base_height",0,1,(-1.0,),(1.0,)),
    Block("segment_mass",1,1,(1.0,),(5.0,)),
    Block("finger_count",2,1,(2,),(6,),integer=True),
    Block("segment_counts",3,6,(2,),(6,),integer=True),
    Block("segment_shapes",9,96,(1.0,0.2),(1.5,0.4)),
    Block("fingertip_shapes",105,6,(0.2,),(0.4,)),
    Block("friction_joint",111,5,(1.0,1.0,0.1,1.0,500.0),(5.0,5.0,2.0,1.1,4000.0)),
    Block("mount_locations",116,6,(0.0,),(2*math.pi,)),
    Block("control",122,63,(0.0,),(1.0,)),
)


class DesignLayout:
    """Named blocks of the design vector.

    Attributes:
        blocks (dict): Block name to Block, in vector order
        dim (int): Total number of dimensions (185 by default)

    Raises:
        LABOClientError: if the blocks are not contiguous and non overlapping
    """
    def __init__(self,blocks=DEFAULT_BLOCKS):
        self.blocks = {b.name : b for b in blocks}
        cursor = 0
        for b in blocks:
            if b.offset != cursor:
                raise LABOClientError(f"block {b.name} starts at {b.offset}, expected {cursor}")
            if b.length % len(b.lo) or len(b.lo) != len(b.hi):
                raise LABOClientError(f"bounds of block {b.name} do not tile its length")
            cursor = b.stop
        self.dim = cursor
        if "control" in self.blocks and self.blocks["control"].length != len(GRASP_TYPES)*CONTROL_PER_TYPE:
            raise LABOClientError("control block must hold 21 values per grasp type")

    def __getitem__(self,name):
        return self.blocks[name]

    def raw(self,theta,name):
        """Slice of theta belonging to a block."""
        b = self.blocks[name]
        return theta[b.offset:b.stop]

    @property
    def morphology_dim(self):
        """Number of morphology dimensions (everything before control)."""
        return self.blocks["control"].offset

    def schema(self):
        """Human readable description of the layout, one entry per block."""
        return {
            "version" : SCHEMA_VERSION,
            "dim" : self.dim,
            "blocks" : [
                {
                    "name" : b.name,
                    "offset" : b.offset,
                    "length" : b.length,
                    "lo" : list(b.lo),
                    "hi" : list(b.hi),
                    "integer" : b.integer
                } for b in self.blocks.values()
            ]
        }

    def dump(self,path):
        """Writes the layout schema as YAML."""
        with open(path,'w') as stream:
            yaml.safe_dump(self.schema(),stream,sort_keys=False)

    @classmethod
    def load(cls,path):
        """Reads a layout schema written by dump."""
        with open(path,'r') as stream:
            data = yaml.safe_load(stream)
        if data.get("version") != SCHEMA_VERSION:
            raise LABOClientError(f"unsupported layout schema version {data.get('version')}")
        blocks = [Block(x["name"],x["offset"],x["length"],tuple(x["lo"]),tuple(x["hi"]),x["integer"]) for x in data["blocks"]]
        return cls(blocks)


def param_vector(values,layout=None):
    """Validates a raw design vector.

    Args:
        values: sequence of reals
        layout (DesignLayout, optional): Defaults to the 185 dimensional layout

    Returns:
        numpy.ndarray: float64 copy of the vector

    Raises:
        MalformedVector: if the length is wrong or an element leaves [0,1]
    """
    dim = layout.dim if layout is not None else DesignLayout().dim
    theta = np.array(values,dtype=float).ravel()
    if theta.shape[0] != dim:
        raise MalformedVector(f"design vector has {theta.shape[0]} elements, expected {dim}")
    if not np.all(np.isfinite(theta)) or np.any(theta < 0.0) or np.any(theta > 1.0):
        raise MalformedVector("design vector elements must lie in [0,1]")
    return theta


@serialize
@dataclass
class HandMorphology:
    """Physical description of a decoded hand.

    Lengths are scene units, angles radians. ``segment_dims[i]`` holds one
    (height, radius) row per segment of finger i.
    """
    base_height: float
    segment_mass: float
    n_fingers: int
    segments_per_finger: Tuple[int, ...]
    segment_dims: Tuple[np.ndarray, ...]
    fingertip_radius: np.ndarray
    lateral_friction: float
    spinning_friction: float
    joint_velocity_limit: float
    joint_damping: float
    joint_effort: float
    mount_angles: np.ndarray

    def total_segments(self):
        """Number of segments over all fingers."""
        return int(sum(self.segments_per_finger))

    @property
    def friction_coefficient(self):
        """Coulomb coefficient of the contact model, [1,5] mapped to [0.2,1]."""
        return self.lateral_friction/5.0


@serialize
@dataclass
class ControlPlan:
    """Open loop joint commands for the three grasp types.

    Attributes:
        commands: (3, 21) raw unit commands, one row per grasp type
        mode: ``velocity`` or ``torque``, how the commands are read
        velocities: (3, 3, 6) target joint velocities per grasp type, joint
            group (palm, intermediate, tip) and finger, inside [-v_lim, v_lim]
        gains: (3, 3) group gains per grasp type, in [0.5, 1.5]
    """
    commands: np.ndarray
    mode: str
    velocities: np.ndarray
    gains: np.ndarray

    @classmethod
    def from_commands(cls,commands,velocity_limit,effort=4000.0,mode="velocity"):
        """Maps raw commands onto joint velocities.

        In velocity mode a command v becomes (2v - 1) v_lim g; in torque mode
        it becomes a torque (2v - 1) effort g, which the kinematic evaluator
        reads as v_lim tau / effort. Both are clipped to the velocity limit.
        """
        commands = np.asarray(commands,float).reshape(len(GRASP_TYPES),CONTROL_PER_TYPE)
        gains = 0.5 + commands[:,18:21]
        signed = 2.0*commands[:,:18].reshape(len(GRASP_TYPES),3,MAX_FINGERS) - 1.0
        if mode == "velocity":
            velocities = signed*velocity_limit*gains[:,:,None]
        elif mode == "torque":
            torques = np.clip(signed*effort*gains[:,:,None],-effort,effort)
            velocities = velocity_limit*torques/effort
        else:
            raise LABOClientError(f"unknown control mode {mode}")
        velocities = np.clip(velocities,-velocity_limit,velocity_limit)
        return cls(commands,mode,velocities,gains)

    def joint_velocities(self,grasp_type,finger,n_segments):
        """Velocities of the joints of one finger, palm joint first.

        The palm and tip joints get their own commands; every intermediate
        joint shares the finger's intermediate command.
        """
        row = self.velocities[GRASP_TYPES.index(grasp_type)]
        v = np.full(n_segments,row[1,finger])
        v[0] = row[0,finger]
        v[-1] = row[2,finger]
        return v


@dataclass
class Rejection:
    """Reason a design was discarded before evaluation."""
    rule: str
    detail: dict = field(default_factory=dict)
    morphology: Optional[HandMorphology] = None

    def to_json(self):
        return {"rule" : self.rule, "detail" : self.detail}


def decode_morphology(theta,layout):
    """Maps the morphology blocks of theta onto a HandMorphology."""
    n_fingers = int(layout["finger_count"].map(layout.raw(theta,"finger_count"))[0])
    segments = layout["segment_counts"].map(layout.raw(theta,"segment_counts"))
    shapes = layout["segment_shapes"].map(layout.raw(theta,"segment_shapes")).reshape(MAX_FINGERS,SLOTS_PER_FINGER,2)
    tips = layout["fingertip_shapes"].map(layout.raw(theta,"fingertip_shapes"))
    friction = layout["friction_joint"].map(layout.raw(theta,"friction_joint"))
    mounts = np.mod(layout["mount_locations"].map(layout.raw(theta,"mount_locations")),2*math.pi)
    return HandMorphology(
        base_height=float(layout["base_height"].map(layout.raw(theta,"base_height"))[0]),
        segment_mass=float(layout["segment_mass"].map(layout.raw(theta,"segment_mass"))[0]),
        n_fingers=n_fingers,
        segments_per_finger=tuple(int(x) for x in segments[:n_fingers]),
        segment_dims=tuple(shapes[i,:segments[i]].copy() for i in range(n_fingers)),
        fingertip_radius=tips[:n_fingers].copy(),
        lateral_friction=float(friction[0]),
        spinning_friction=float(friction[1]),
        joint_velocity_limit=float(friction[2]),
        joint_damping=float(friction[3]),
        joint_effort=float(friction[4]),
        mount_angles=mounts[:n_fingers].copy()
    )


def angular_gaps(angles):
    """Circular distances (radians) between neighbouring mount angles."""
    a = np.sort(np.mod(np.asarray(angles,float),2*math.pi))
    if a.shape[0] < 2:
        return np.array([2*math.pi])
    gaps = np.diff(a)
    return np.append(gaps,2*math.pi - (a[-1]-a[0]))


def rejection_check(morph,min_angle_deg=12.0):
    """Applies the rejection rule to a morphology.

    A hand is rejected iff two finger mounts are strictly closer than
    ``min_angle_deg`` on the palm rim (wraparound distance).

    Returns:
        None if the hand passes, a Rejection otherwise
    """
    closest = math.degrees(float(np.min(angular_gaps(morph.mount_angles))))
    if closest < min_angle_deg - 1e-9:
        return Rejection("FingersTooClose",{"min_angle_deg" : closest},morph)
    return None


def decode(theta,layout=None,control_mode="velocity",min_angle_deg=12.0):
    """Decodes a design vector into a hand and its control plan.

    Args:
        theta: 185 reals in [0,1]
        layout (DesignLayout, optional): Defaults to the standard layout
        control_mode (str, optional): ``velocity`` or ``torque``
        min_angle_deg (float, optional): Rejection threshold

    Returns:
        (HandMorphology, ControlPlan) or Rejection

    Raises:
        MalformedVector: if theta is not a valid design vector
    """
    layout = layout if layout is not None else DesignLayout()
    theta = param_vector(theta,layout)
    morph = decode_morphology(theta,layout)
    rejected = rejection_check(morph,min_angle_deg)
    if rejected is not None:
        return rejected
    plan = ControlPlan.from_commands(
        layout.raw(theta,"control"),
        morph.joint_velocity_limit,
        morph.joint_effort,
        control_mode
    )
    return morph, plan


def morphology_cost(morph):
    """Cost of building a hand: (n_f - 2)/4 + sum_i max(n_i - 3, 0)/3."""
    segments = np.asarray(morph.segments_per_finger,float)
    return (morph.n_fingers - 2)/4.0 + float(np.sum(np.maximum(segments - 3.0,0.0)))/3.0


def pin_fingers(theta,n_fingers,layout=None):
    """Copy of theta whose finger count decodes to ``n_fingers``."""
    layout = layout if layout is not None else DesignLayout()
    block = layout["finger_count"]
    lo, hi = block.lo[0], block.hi[0]
    if not lo <= n_fingers <= hi:
        raise LABOClientError(f"finger count {n_fingers} outside [{lo},{hi}]")
    theta = np.array(theta,dtype=float)
    theta[block.offset] = (n_fingers - lo + 0.5)/(hi - lo + 1)
    return theta


def replace(morph,**changes):
    """Copy of a morphology with some fields replaced."""
    return dataclasses.replace(morph,**changes)
