"""Test design vector layout and decoding
"""
import math
import numpy as np
import LABOToolkit
from LABOToolkit.layout import Block, angular_gaps, replace
from .utils import make_theta, make_hand

layout = LABOToolkit.DesignLayout()

def test_dimensions():
    """Test block offsets and total size
    """
    assert layout.dim == 185
    assert layout.morphology_dim == 122
    assert layout["segment_shapes"].length == 96
    assert layout["control"].offset == 122
    try:
        LABOToolkit.DesignLayout((Block("a",0,2,(0.0,),(1.0,)),Block("b",3,1,(0.0,),(1.0,))))
        assert False
    except LABOToolkit.LABOClientError:
        pass

def test_block_map():
    """Test affine and integer mappings
    """
    block = Block("count",0,1,(2,),(6,),integer=True)
    assert block.map([0.0])[0] == 2
    assert block.map([0.5])[0] == 4
    assert block.map([1.0])[0] == 6
    assert block.map([0.999])[0] == 6
    shapes = layout["segment_shapes"]
    mapped = shapes.map(np.zeros(96))
    assert mapped[0] == 1.0 and mapped[1] == 0.2
    mapped = shapes.map(np.ones(96))
    assert mapped[0] == 1.5 and mapped[1] == 0.4

def test_param_vector():
    """Test design vector validation
    """
    theta = LABOToolkit.param_vector([0.5]*185)
    assert theta.dtype == np.float64 and theta.shape == (185,)
    for bad in ([0.5]*184,[0.5]*184 + [1.5],[0.5]*184 + [-0.1],[0.5]*184 + [float("nan")]):
        try:
            LABOToolkit.param_vector(bad)
            assert False
        except LABOToolkit.MalformedVector:
            pass

def test_finger_count():
    """Test finger count decoding at the range ends and middle
    """
    theta = make_theta(3)
    theta[2] = 0.0
    theta[116:122] = np.arange(6)/6
    morph, _ = LABOToolkit.decode(theta)
    assert morph.n_fingers == 2
    theta[2] = 0.5
    morph, _ = LABOToolkit.decode(theta)
    assert morph.n_fingers == 4
    assert len(morph.segment_dims) == 4
    assert morph.fingertip_radius.shape == (4,)

def test_decode_symmetric():
    """Test that symmetric three finger hands pass
    """
    decoded = LABOToolkit.decode(make_theta(3,mount_deg=[0,120,240]))
    assert not isinstance(decoded,LABOToolkit.Rejection)
    morph, plan = decoded
    assert morph.n_fingers == 3
    assert morph.segments_per_finger == (3,3,3)
    assert all(d.shape == (3,2) for d in morph.segment_dims)
    assert np.allclose(np.degrees(morph.mount_angles),[0,120,240])
    assert plan.velocities.shape == (3,3,6)
    assert math.isclose(morph.friction_coefficient,morph.lateral_friction/5.0)

def test_rejection():
    """Test the minimum finger spacing rule
    """
    for mounts in ([0,10],[0,11.9],[0,348.5]):
        decoded = LABOToolkit.decode(make_theta(2,mount_deg=mounts))
        assert isinstance(decoded,LABOToolkit.Rejection)
        assert decoded.rule == "FingersTooClose"
        assert decoded.morphology.n_fingers == 2
    rejected = LABOToolkit.decode(make_theta(2,mount_deg=[0,348.5]))
    assert math.isclose(rejected.detail["min_angle_deg"],11.5,abs_tol=1e-6)
    assert not isinstance(LABOToolkit.decode(make_theta(2,mount_deg=[0,12.5])),LABOToolkit.Rejection)
    assert np.isclose(angular_gaps([0.1,2*math.pi - 0.1]).min(),0.2)

def test_rejection_random():
    """Test the spacing rule on random designs with forced mounts
    """
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(2,7))
        theta = LABOToolkit.pin_fingers(rng.uniform(size=185),n)
        start = rng.uniform(0.0,300.0)
        theta[116] = start/360.0
        theta[117] = (start + rng.uniform(0.0,11.5))/360.0
        assert isinstance(LABOToolkit.decode(theta),LABOToolkit.Rejection)
        theta[116:116 + n] = (start + 360.0*np.arange(n)/n)%360.0/360.0
        assert not isinstance(LABOToolkit.decode(theta),LABOToolkit.Rejection)

def test_cost():
    """Test morphology cost arithmetic
    """
    two = make_hand([0.0,math.pi])
    assert LABOToolkit.morphology_cost(two) == 0.0
    six = make_hand(list(np.arange(6)*math.pi/3),segments=6)
    assert LABOToolkit.morphology_cost(six) == 7.0
    three = replace(make_hand(),segments_per_finger=(2,3,3))
    assert LABOToolkit.morphology_cost(three) == 0.25

def test_control_plan():
    """Test command to velocity mapping
    """
    still = LABOToolkit.ControlPlan.from_commands(np.full(63,0.5),1.2)
    assert np.all(still.velocities == 0.0)
    assert np.allclose(still.gains,1.0)
    commands = np.full((3,21),1.0)
    commands[:,18:21] = 0.5
    full = LABOToolkit.ControlPlan.from_commands(commands,1.2)
    assert np.allclose(full.velocities,1.2)
    commands[:,18:21] = 1.0
    clipped = LABOToolkit.ControlPlan.from_commands(commands,1.2)
    assert np.allclose(clipped.velocities,1.2)
    torque = LABOToolkit.ControlPlan.from_commands(np.zeros(63),1.2,mode="torque")
    assert np.allclose(torque.velocities,-0.6)
    v = full.joint_velocities("pinch",1,4)
    assert v.shape == (4,)
    try:
        LABOToolkit.ControlPlan.from_commands(commands,1.0,mode="position")
        assert False
    except LABOToolkit.LABOClientError:
        pass

def test_pin_fingers():
    """Test pinning the finger count
    """
    theta = make_theta(5)
    for n in range(2,7):
        pinned = LABOToolkit.pin_fingers(theta,n)
        assert layout["finger_count"].map(pinned[2:3])[0] == n
    assert theta[2] == make_theta(5)[2]
    try:
        LABOToolkit.pin_fingers(theta,7)
        assert False
    except LABOToolkit.LABOClientError:
        pass

def test_schema_dump(tmp_path):
    """Test the layout schema survives YAML
    """
    path = tmp_path / "layout.yml"
    layout.dump(path)
    loaded = LABOToolkit.DesignLayout.load(path)
    assert loaded.dim == 185
    assert loaded.schema() == layout.schema()
