"""Kinematic model of a decoded hand and the closing phase of an episode.

The palm is a disk of radius ``PALM_RADIUS`` in the z = 0 plane of the hand
frame. Finger i is mounted on the rim at its mount angle and, with all joints
at zero, points along +z. Each finger is a planar chain in the plane spanned
by +z and the inward radial direction; positive joint angles curl it towards
the palm axis. Segments are capsules, the fingertip is a sphere at the distal
end of the last segment.

Link k of a finger is segment k; the fingertip sphere belongs to the distal
link. A contact on link k freezes joints 0..k, a joint that reaches its limit
stops there.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional
import numpy as np
from LABOToolkit.utils import GeometryError
from LABOToolkit.shapes import segment_distance

PALM_RADIUS = 4.0
JOINT_LIMITS = (-0.5,1.6)
UP = np.array([0.0,0.0,1.0])


class Finger:
    """One finger of the hand.

    Attributes:
        n (int): number of segments (= joints = links)
        mount (numpy.ndarray): mount point on the palm rim
        inward (numpy.ndarray): horizontal unit vector towards the palm axis
        heights, radii (numpy.ndarray): segment capsule dimensions
        tip_radius (float): fingertip sphere radius
        reach (float): distance from the mount to the far side of the tip
    """
    def __init__(self,mount_angle,heights,radii,tip_radius,palm_radius=PALM_RADIUS):
        self.n = len(heights)
        radial = np.array([math.cos(mount_angle),math.sin(mount_angle),0.0])
        self.mount = palm_radius*radial
        self.inward = -radial
        self.heights = np.asarray(heights,float)
        self.radii = np.asarray(radii,float)
        self.tip_radius = float(tip_radius)
        self.palm_radius = palm_radius
        self.reach = float(self.heights.sum()) + self.tip_radius
        counts = [max(2,int(math.ceil(h/r)) + 1) for h,r in zip(self.heights,self.radii)]
        self._seg = np.repeat(np.arange(self.n),counts)
        self._frac = np.concatenate([np.linspace(0.0,1.0,m) for m in counts])
        self.sample_link = np.append(self._seg,self.n - 1)
        self.sample_radius = np.append(self.radii[self._seg],self.tip_radius)

    def joint_positions(self,q):
        """Positions of the n joints followed by the fingertip centre."""
        alpha = np.cumsum(q)
        direction = np.cos(alpha)[:,None]*UP + np.sin(alpha)[:,None]*self.inward
        return np.vstack([self.mount,self.mount + np.cumsum(self.heights[:,None]*direction,axis=0)])

    def samples(self,q):
        """Points along the capsule axes plus the fingertip centre."""
        p = self.joint_positions(q)
        a = p[self._seg]
        b = p[self._seg + 1]
        pts = a + self._frac[:,None]*(b - a)
        return np.vstack([pts,p[-1]])

    def _per_link(self,values):
        out = np.full(self.n,np.inf)
        np.minimum.at(out,self.sample_link,values)
        return out

    def clearances(self,q,placed):
        """Per link clearance to the object and to the palm.

        The proximal link sits on the palm and is never checked against it.
        """
        pts = self.samples(q)
        obj = self._per_link(placed.sdf(pts) - self.sample_radius)
        on_palm = (self.sample_link > 0) & (np.linalg.norm(pts[:,:2],axis=1) < self.palm_radius)
        palm = self._per_link(np.where(on_palm,pts[:,2] - self.sample_radius,np.inf))
        return obj, palm

    def contact(self,q,placed,link):
        """Contact point on the object and its outward normal for one link."""
        pts = self.samples(q)
        mask = self.sample_link == link
        values = placed.sdf(pts[mask]) - self.sample_radius[mask]
        return placed.closest(pts[mask][int(np.argmin(values))])

    def capsules(self,q):
        """Segment end points and radii; the fingertip is a degenerate capsule."""
        p = self.joint_positions(q)
        start = np.vstack([p[:-1],p[-1]])
        end = np.vstack([p[1:],p[-1]])
        return start, end, np.append(self.radii,self.tip_radius)


class FingerMotion:
    """Piecewise linear joint trajectory of one finger.

    Each piece starts at a step with a configuration and constant joint
    velocities; positions are clipped to the joint limits.
    """
    def __init__(self,n,dt):
        self.n = n
        self.dt = dt
        self.starts = []
        self.configs = []
        self.velocities = []

    def add(self,step,q,velocity):
        self.starts.append(int(step))
        self.configs.append(np.array(q,float))
        self.velocities.append(np.array(velocity,float))

    def at(self,step):
        """Joint angles after ``step`` integration steps."""
        if not self.starts:
            return np.zeros(self.n)
        i = int(np.searchsorted(self.starts,step,side='right')) - 1
        i = max(i,0)
        q = self.configs[i] + self.velocities[i]*(step - self.starts[i])*self.dt
        return np.clip(q,*JOINT_LIMITS)


@dataclass
class ContactEvent:
    """Links of one finger that touched the object or the palm at a step."""
    finger: int
    step: int
    object_links: List[int]
    palm_links: List[int]


def close_finger(finger,velocity,placed,config,index=0):
    """Integrates one finger until every joint is frozen or the steps run out.

    Contacts are located with a coarse scan every ``contact_stride`` steps that
    uses a conservative clearance margin, refined to the exact step.

    Returns:
        (FingerMotion, tip contact step or None, list of ContactEvent)
    """
    lo, hi = JOINT_LIMITS
    n_steps, dt, tol = config.close_steps, config.dt, config.contact_tol
    motion = FingerMotion(finger.n,dt)
    frozen = np.zeros(finger.n,bool)
    events = []
    tip_step = None

    def touching(q,dynamic):
        obj, palm = finger.clearances(q,placed)
        return np.flatnonzero(dynamic & (obj <= tol)), np.flatnonzero(dynamic & (palm <= tol))

    def freeze(step,obj_links,palm_links):
        nonlocal tip_step
        deepest = int(max(np.concatenate([obj_links,palm_links])))
        frozen[:deepest + 1] = True
        events.append(ContactEvent(index,step,obj_links.tolist(),palm_links.tolist()))
        if finger.n - 1 in obj_links and tip_step is None:
            tip_step = step

    step = 0
    q = np.zeros(finger.n)
    obj_links, palm_links = touching(q,np.ones(finger.n,bool))
    if obj_links.size or palm_links.size:
        freeze(0,obj_links,palm_links)
    while step < n_steps:
        vel = np.where(frozen,0.0,velocity)
        motion.add(step,q,vel)
        with np.errstate(divide='ignore',invalid='ignore'):
            to_limit = np.where(vel > 0,(hi - q)/(vel*dt),np.where(vel < 0,(lo - q)/(vel*dt),0.0))
        still = min(n_steps,step + int(math.ceil(float(np.max(to_limit,initial=0.0)))))
        if still <= step:
            break
        dynamic = ~np.logical_and.accumulate(frozen)
        speed = float(np.abs(vel).sum())*finger.reach*dt
        hit = None
        t = step
        while t < still and hit is None:
            t_next = min(t + config.contact_stride,still)
            obj, palm = finger.clearances(motion.at(t_next),placed)
            gap = float(np.min(np.where(dynamic,np.minimum(obj,palm),np.inf)))
            if gap <= tol + speed*(t_next - t):
                for u in range(t + 1,t_next + 1):
                    obj_links, palm_links = touching(motion.at(u),dynamic)
                    if obj_links.size or palm_links.size:
                        hit = (u,obj_links,palm_links)
                        break
            t = t_next
        if hit is None:
            break
        step, obj_links, palm_links = hit
        q = motion.at(step)
        freeze(step,obj_links,palm_links)
    return motion, tip_step, events


class Hand:
    """Capsule model of a decoded hand.

    Self-collision is overlap between non-adjacent capsules: capsules of
    different fingers, or capsules of one finger two or more links apart
    (the fingertip counts as the link after the last segment).
    """
    def __init__(self,morph,palm_radius=PALM_RADIUS):
        self.morph = morph
        self.fingers = [
            Finger(morph.mount_angles[i],morph.segment_dims[i][:,0],morph.segment_dims[i][:,1],morph.fingertip_radius[i],palm_radius)
            for i in range(morph.n_fingers)
        ]
        owner = np.concatenate([np.full(f.n + 1,i) for i,f in enumerate(self.fingers)])
        link = np.concatenate([np.arange(f.n + 1) for f in self.fingers])
        a, b = np.triu_indices(owner.shape[0],k=1)
        keep = (owner[a] != owner[b]) | (np.abs(link[a] - link[b]) >= 2)
        self.pairs = (a[keep],b[keep])

    @property
    def n_fingers(self):
        return len(self.fingers)

    def capsules(self,qs):
        parts = [f.capsules(q) for f,q in zip(self.fingers,qs)]
        return tuple(np.concatenate(x) for x in zip(*parts))

    def self_collision(self,qs):
        """True if any pair of non-adjacent capsules overlaps."""
        start, end, radius = self.capsules(qs)
        a, b = self.pairs
        if a.size == 0:
            return False
        d = segment_distance(start[a],end[a],start[b],end[b])
        return bool(np.any(d < radius[a] + radius[b]))


@dataclass
class ClosingResult:
    """Outcome of the closing phase.

    Attributes:
        motions: per finger joint trajectories
        tip_steps: per finger step of the first fingertip contact, or None
        events: contact events of all fingers
        collision_samples: self-collision flag at steps 0, stride, 2 stride, ...
        collision_stride: steps between samples
        n_steps: number of closing steps
    """
    motions: List[FingerMotion]
    tip_steps: List[Optional[int]]
    events: List[ContactEvent]
    collision_samples: np.ndarray
    collision_stride: int
    n_steps: int
    final_collision: bool = False
    final_q: list = field(default_factory=list)

    def contact_ratio_trace(self):
        """Fraction of fingertips in contact after each of the closing steps."""
        steps = np.arange(1,self.n_steps + 1)
        hits = [steps >= s for s in self.tip_steps if s is not None]
        if not hits:
            return np.zeros(self.n_steps)
        return np.sum(hits,axis=0)/len(self.tip_steps)

    def collision_trace(self):
        """Held self-collision flag for each closing step."""
        steps = np.arange(1,self.n_steps + 1)
        return self.collision_samples[steps//self.collision_stride]

    @property
    def self_collision_steps(self):
        return int(np.sum(self.collision_trace()))

    @property
    def tip_ratio(self):
        """Fraction of fingertips in contact at the end of closing."""
        return sum(s is not None for s in self.tip_steps)/len(self.tip_steps)


def close_hand(hand,plan,grasp_type,placed,config):
    """Runs the closing phase for all fingers of a hand.

    Raises:
        GeometryError: if non-adjacent capsules overlap before closing starts
    """
    motions, tip_steps, events = [], [], []
    for i,finger in enumerate(hand.fingers):
        velocity = plan.joint_velocities(grasp_type,i,finger.n)
        motion, tip, finger_events = close_finger(finger,velocity,placed,config,i)
        motions.append(motion)
        tip_steps.append(tip)
        events.extend(finger_events)
    stride = config.collision_stride
    sample_steps = np.arange(0,config.close_steps + 1,stride)
    samples = np.array([hand.self_collision([m.at(s) for m in motions]) for s in sample_steps])
    if samples[0]:
        raise GeometryError("hand intersects itself before closing starts")
    final_q = [m.at(config.close_steps) for m in motions]
    return ClosingResult(motions,tip_steps,events,samples,stride,config.close_steps,
                         hand.self_collision(final_q),final_q)
