"""Test episodes, rewards and design scores
"""
import math
import numpy as np
import pytest
import LABOToolkit
from LABOToolkit import grasp
from LABOToolkit.grasp import (GraspConfig, StepState, step_reward, vicinity_check, place_object,
                               grasp_state, perturbation_test, report_row)
from .utils import make_theta, make_hand, closing_plan, sphere_task, small_suite

config = GraspConfig()
suite = small_suite()

def caged_sphere():
    task = sphere_task()
    hand = LABOToolkit.Hand(make_hand())
    placed = place_object(task.object,"power",0.0)
    closing = LABOToolkit.close_hand(hand,closing_plan(),"power",placed,config)
    return grasp_state(hand,closing,placed,task,config)

def test_config():
    """Test evaluator settings
    """
    assert config.reward_variant == "icra" and config.close_steps == 2000
    assert math.isclose(config.dt,1/240)
    loaded = GraspConfig.from_dict({"close_steps" : 100, "unused" : 1, "force_range" : [1,2]})
    assert loaded.close_steps == 100 and loaded.force_range == (1.0,2.0)
    try:
        GraspConfig(reward_variant="sparse")
        assert False
    except LABOToolkit.LABOClientError:
        pass

def test_step_reward():
    """Test per step reward arithmetic
    """
    assert math.isclose(step_reward(StepState(0,1,0),"power"),0.1)
    assert math.isclose(step_reward(StepState(1,0,0),"pinch"),-0.01)
    assert math.isclose(step_reward(StepState(0,0.5,0.2,1.0),"lateral"),-0.01)
    try:
        step_reward(StepState(),"hook")
        assert False
    except LABOToolkit.LABOClientError:
        pass

def test_vicinity():
    """Test vicinity bounds per grasp type
    """
    assert vicinity_check([3.0,-3.0,1.0],0.0,"power")
    assert not vicinity_check([3.01,0.0,0.0],0.0,"power")
    assert not vicinity_check([0.0,0.0,1.01],0.0,"power")
    assert vicinity_check([2.0,2.0,0.05],0.0,"pinch")
    assert not vicinity_check([0.0,0.0,0.0],0.0,"pinch")
    assert not vicinity_check([0.0,2.5,0.1],0.0,"pinch")
    assert vicinity_check([0.0,0.0,0.3],2.49,"lateral")
    assert not vicinity_check([0.0,0.0,0.0],2.5,"lateral")
    assert not vicinity_check([0.0,0.0,-0.31],0.0,"lateral")

def test_place_object():
    """Test object poses on and above the palm
    """
    ball = sphere_task().object
    assert np.allclose(place_object(ball,"power",0.0).position,[0.0,0.0,1.5])
    assert np.allclose(place_object(ball,"pinch",0.0).position,[0.0,0.0,2.25])
    assert np.allclose(place_object(ball,"lateral",1.0).position,[0.0,0.0,3.0])

def test_caged_sphere():
    """Test force closure of three fingers and the palm around a sphere
    """
    state = caged_sphere()
    assert state.n_palm == 1 and state.points.shape[0] == 4
    assert state.tip_ratio == 1.0 and state.mu == 1.0
    G = state.matrix(4)
    for i in range(8):
        angle = 2*math.pi*i/8
        load = np.array([math.cos(angle),math.sin(angle),0.0,0.0,0.0,0.0])*1000.0
        assert LABOToolkit.cone_contains(G,-load)
    outcome = perturbation_test(state,"power",0,config)
    assert outcome.survived == 8
    assert np.all(outcome.d_pos < 1e-6)
    assert np.all((outcome.magnitudes >= 500.0) & (outcome.magnitudes <= 1000.0))

def test_free_object():
    """Test that objects without fingertip contact fail every push
    """
    state = caged_sphere()
    state.tip_ratio = 0.0
    outcome = perturbation_test(state,"power",0,config)
    assert outcome.survived == 0 and not any(outcome.vicinity_flags)

def test_episode_success():
    """Test a full power grasp episode
    """
    result = LABOToolkit.simulate_episode(make_hand(),closing_plan(),sphere_task(),7)
    assert result.success and result.perturbation_survived == 8
    assert result.self_collision_steps == 0
    assert result.contact_ratio_trace[-1] == 1.0
    assert result.episodic_reward > 0.0
    v1 = LABOToolkit.simulate_episode(make_hand(),closing_plan(),sphere_task(),7,GraspConfig(reward_variant="v1"))
    assert v1.success and v1.episodic_reward != result.episodic_reward

def test_episode_idle():
    """Test an episode whose hand never moves
    """
    result = LABOToolkit.simulate_episode(make_hand(),closing_plan(0.5),sphere_task(),7)
    assert not result.success and result.perturbation_survived == 0
    assert np.all(result.contact_ratio_trace == 0.0)
    assert result.episodic_reward < 0.0

def test_episode_determinism():
    """Test identical episodes for identical inputs
    """
    a = LABOToolkit.simulate_episode(make_hand(),closing_plan(),sphere_task(),3)
    b = LABOToolkit.simulate_episode(make_hand(),closing_plan(),sphere_task(),3)
    assert LABOToolkit.hash_of(a) == LABOToolkit.hash_of(b)

def test_episode_geometry_error():
    """Test hands that intersect themselves
    """
    try:
        LABOToolkit.simulate_episode(make_hand([0.0,0.05]),closing_plan(),sphere_task(),0)
        assert False
    except LABOToolkit.GeometryError:
        pass

def test_score_rejected():
    """Test the floor of rejected designs
    """
    report = LABOToolkit.score(make_theta(2,mount_deg=[0,10]),suite,0)
    assert report.F == -1.0 and report.cost == 0.0
    assert report.rejected == "FingersTooClose"
    assert np.all(report.p == 0) and np.all(report.per_task_rewards == -1.0)
    low = LABOToolkit.score(make_theta(2,mount_deg=[0,10]),suite,0,floor=-5.0)
    assert low.F == -5.0

def test_score_geometry_error():
    """Test the floor of self intersecting hands
    """
    log = LABOToolkit.RecordSet()
    report = LABOToolkit.score(make_theta(2,mount_deg=[0,1]),suite,0,min_angle_deg=0.0,log=log)
    assert report.rejected == "GeometryError" and report.F == -1.0
    assert log.of_type("score")[0].record_def["rejected"] == "GeometryError"

def test_score_cost(monkeypatch):
    """Test the cost term of the score
    """
    def idle(morph,plan,task,seed,config=None):
        return LABOToolkit.EpisodeResult(0.0,False,np.zeros(1),0,0)
    monkeypatch.setattr(grasp,"simulate_episode",idle)
    report = LABOToolkit.score(make_theta(2,mount_deg=[0,180]),suite,0)
    assert report.F == 0.0 and report.cost == 0.0
    report = LABOToolkit.score(make_theta(6,segments=6),suite,0)
    assert report.cost == 7.0
    assert math.isclose(report.F,-0.7,abs_tol=1e-12)
    assert report.n_fingers == 6

def test_score_workers():
    """Test that concurrent episodes give the same report
    """
    theta = make_theta(3)
    serial = LABOToolkit.score(theta,suite,5,GraspConfig(close_steps=240))
    parallel = LABOToolkit.score(theta,suite,5,GraspConfig(close_steps=240),workers=3)
    assert LABOToolkit.hash_of(serial) == LABOToolkit.hash_of(parallel)
    assert math.isclose(serial.F,float(np.mean(serial.per_task_rewards)) - 0.1*serial.cost)
    assert serial.p.shape == (3,)

def test_evaluate_suite():
    """Test scoring on both splits
    """
    train, test = LABOToolkit.evaluate_suite(make_theta(2,mount_deg=[0,10]),suite,0)
    assert train.p.shape == (3,) and test.p.shape == (1,)
    row = report_row(test)
    assert set(row) == {"power","pinch","lateral","overall","cost","F","n_tasks"}
    assert row["overall"] == 0.0 and row["n_tasks"] == 1

def held_state(points,normals,mu):
    return grasp.GraspState(np.array(points,float),np.array(normals,float),np.zeros(3),mu,
                            1.0,1.0,1.0,np.eye(3))

def oracle_flags(state,seed,config):
    G = state.matrix(config.friction_edges)
    magnitudes = np.random.default_rng(seed).uniform(*config.force_range,size=config.n_directions)
    flags = []
    for i,m in enumerate(magnitudes):
        angle = 2*math.pi*i/config.n_directions
        load = np.array([math.cos(angle)*m,math.sin(angle)*m,0.0,0.0,0.0,0.0])
        flags.append(LABOToolkit.cone_contains(G,-load))
    return flags

def test_perturbation_single_contact():
    """Test that a lone tilted fingertip does not hold horizontal pushes
    """
    small = GraspConfig(friction_edges=4)
    state = held_state([[1.0,0.0,1.0]],[[-1.0,0.0,-1.0]],0.2)
    outcome = perturbation_test(state,"power",0,small)
    assert outcome.survived == sum(oracle_flags(state,0,small))
    assert outcome.survived < small.n_directions

@pytest.mark.slow
def test_perturbation_oracle():
    """Test survival against exhaustive cone membership on random contact sets
    """
    small = GraspConfig(friction_edges=4)
    rng = np.random.default_rng(17)
    for trial in range(50):
        n = int(rng.integers(1,4))
        points = rng.normal(size=(n,3))
        points /= np.linalg.norm(points,axis=1,keepdims=True)
        normals = -points + 0.3*rng.normal(size=(n,3))
        state = held_state(points,normals,float(rng.uniform(0.1,1.0)))
        expected = oracle_flags(state,trial,small)
        for grasp_type in ("power","lateral"):
            outcome = perturbation_test(state,grasp_type,trial,small)
            assert outcome.vicinity_flags == expected
            assert outcome.survived == sum(expected)

def test_v1_episode_reward():
    """Test the first-version episode reward against its step rewards
    """
    assert np.allclose(grasp.closing_reward_v1(np.array([1.0,0.0]),np.array([0.0,0.5])),[-0.01,0.005])
    task = sphere_task()
    hand = LABOToolkit.Hand(make_hand())
    placed = place_object(task.object,"power",0.0)
    v1 = GraspConfig(reward_variant="v1")
    closing = LABOToolkit.close_hand(hand,closing_plan(),"power",placed,v1)
    state = grasp_state(hand,closing,placed,task,v1)
    outcome = perturbation_test(state,"power",0,v1)
    closing_part = sum(grasp.closing_reward_v1(c,r) for c,r in zip(closing.collision_trace(),closing.contact_ratio_trace()))
    pushes = sum(v1.perturb_steps*grasp.perturbation_reward_v1(flag,m,closing.tip_ratio)
                 for flag,m in zip(outcome.vicinity_flags,outcome.magnitudes))
    total = grasp.episode_reward(closing,outcome,"power",v1)
    assert math.isclose(total,closing_part + pushes,rel_tol=1e-9,abs_tol=1e-9)
