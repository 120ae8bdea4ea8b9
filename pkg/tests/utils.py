"""Utility functions for testing
"""
import math
import numpy as np
import LABOToolkit
from LABOToolkit.objects import ObjectModel, GraspTask, TaskSuite, make_object

def unit(value,lo,hi):
    """Raw unit value that decodes to ``value`` on a continuous range."""
    return (value - lo)/(hi - lo)

def unit_int(value,lo,hi):
    """Raw unit value in the middle of the bin of an integer ``value``."""
    return (value - lo + 0.5)/(hi - lo + 1)

def make_theta(n_fingers=3,segments=3,mount_deg=None,fill=0.5):
    """Design vector with a chosen finger count, segment count and mounts.

    Every other entry is ``fill``.
    """
    theta = np.full(185,fill)
    theta[2] = unit_int(n_fingers,2,6)
    theta[3:9] = unit_int(segments,2,6)
    if mount_deg is None:
        mount_deg = [360.0*i/n_fingers for i in range(n_fingers)]
    for i,a in enumerate(mount_deg):
        theta[116 + i] = unit(math.radians(a),0.0,2*math.pi)
    return theta

def make_hand(mount_angles=None,segments=3,height=1.5,radius=0.3,tip=0.4,friction=5.0,effort=4000.0,v_lim=1.0):
    """HandMorphology with identical fingers."""
    if mount_angles is None:
        mount_angles = [0.0,2*math.pi/3,4*math.pi/3]
    n = len(mount_angles)
    return LABOToolkit.HandMorphology(
        base_height=0.0,
        segment_mass=1.0,
        n_fingers=n,
        segments_per_finger=tuple([segments]*n),
        segment_dims=tuple(np.array([[height,radius]]*segments) for _ in range(n)),
        fingertip_radius=np.full(n,tip),
        lateral_friction=friction,
        spinning_friction=1.0,
        joint_velocity_limit=v_lim,
        joint_damping=1.0,
        joint_effort=effort,
        mount_angles=np.array(mount_angles,float)
    )

def closing_plan(palm=1.0,middle=0.5,tip=0.5,v_lim=1.0):
    """Plan driving the palm joints of every finger, same for every grasp type."""
    row = [palm]*6 + [middle]*6 + [tip]*6 + [0.5,0.5,0.5]
    return LABOToolkit.ControlPlan.from_commands(np.array(row*3),v_lim)

def sphere_task(radius=1.5,grasp_type="power",mass=1.0):
    """Task holding a sphere of the given radius."""
    obj = ObjectModel("sphere-test",  "sphere",LABOToolkit.SphereShape(radius),642,radius,mass)
    return GraspTask(grasp_type,obj,0)

def small_suite():
    """Three training tasks and one test task on cheap objects."""
    train = [
        GraspTask("power",make_object("sphere",1),1),
        GraspTask("pinch",make_object("box",2,"small"),2),
        GraspTask("lateral",make_object("plate",3),3)
    ]
    test = [GraspTask("power",make_object("box",4),4)]
    return TaskSuite(train,test)

def small_config(out_dir,**sections):
    """Configuration of a fast run."""
    data = {
        "run" : {"budget" : 6, "seed" : 0, "out_dir" : str(out_dir)},
        "grasp" : {"close_steps" : 240, "perturb_steps" : 10},
        "representation" : {
            "latent_dim" : 4,
            "hidden" : 8,
            "n_pretrain" : 16,
            "pretrain_steps" : 20,
            "finetune_steps" : 4,
            "batch_size" : 4,
            "lr" : 0.001
        },
        "surrogate" : {"n_raw" : 64, "n_restarts" : 2, "refine_steps" : 3, "fit_restarts" : 1},
        "cmaes" : {"popsize" : 4}
    }
    for name,values in sections.items():
        data.setdefault(name,{}).update(values)
    return data

def finite_difference(fn,x,h=1e-5):
    """Central finite difference gradient of a scalar function."""
    x = np.array(x,float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step.flat[i] = h
        grad.flat[i] = (fn(x + step) - fn(x - step))/(2*h)
    return grad

def relative_error(a,b):
    a, b = np.asarray(a,float), np.asarray(b,float)
    return float(np.linalg.norm(a - b)/max(np.linalg.norm(a) + np.linalg.norm(b),1e-12))
