"""Objects and tasks of the grasp benchmark.

Objects are generated procedurally from a seed, so a task suite is fully
described by a small manifest of (grasp type, object id, seed) entries:

    >>> suite = LABOToolkit.build_suite(n_tasks=20, n_test=6, seed=0)
    >>> LABOToolkit.write_manifest(suite, "suite.json")

Object ids have the form ``<kind>-<size>-<seed>`` for generated objects and
``mesh:<path>`` for imported Wavefront meshes.
"""
import json
import math
from dataclasses import dataclass, field
from typing import List
import numpy as np
from scipy.spatial import ConvexHull
from LABOToolkit.utils import LABOClientError, UnsupportedMesh, SeedTree
from LABOToolkit.encoders import hash_of
from LABOToolkit.layout import GRASP_TYPES
from LABOToolkit.shapes import SphereShape, BoxShape, HullShape, icosphere, check_watertight, quaternion_matrix

KINDS = ("sphere","box","polyhedron","plate")
SIZES = ("regular","small")
LOW_VERTICES = 5000
HIGH_VERTICES = 7000
MANIFEST_VERSION = 1

# half extents / radii per size class
_RANGES = {
    "regular" : {"sphere" : (0.8,1.8), "box" : (0.6,1.3), "polyhedron" : (0.7,1.6)},
    "small" : {"sphere" : (0.4,0.9), "box" : (0.3,0.7), "polyhedron" : (0.35,0.8)},
}
_PLATE = ((0.9,1.6),(0.6,1.2),(0.08,0.15))
_MASS = (0.2,2.0)
_POLY_VERTICES = (20,9000)

# world-from-hand rotations: palm up, palm down, palm sideways
HAND_POSES = {
    "power" : np.eye(3),
    "pinch" : np.array([[1.0,0.0,0.0],[0.0,-1.0,0.0],[0.0,0.0,-1.0]]),
    "lateral" : np.array([[0.0,0.0,1.0],[0.0,1.0,0.0],[-1.0,0.0,0.0]]),
}


@dataclass
class ObjectModel:
    """A graspable object.

    Attributes:
        object_id: regenerable identifier
        kind: sphere, box, polyhedron, plate or mesh
        shape: geometry in the object frame, centred on the origin
        vertex_count: vertices of the object's surface mesh
        scale: characteristic size (bounding radius), scene units
        mass: mass units
        initial_pose: position (3,) and orientation quaternion (w,x,y,z) in
            the hand frame before placement
    """
    object_id: str
    kind: str
    shape: object
    vertex_count: int
    scale: float
    mass: float
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0,0.0,0.0,0.0]))

    @property
    def initial_pose(self):
        """(position, quaternion) pair."""
        return self.position, self.orientation

    @property
    def rotation(self):
        return quaternion_matrix(self.orientation)

    def mesh(self):
        """Triangle mesh (vertices, triangles) of the object in its own frame."""
        if isinstance(self.shape,SphereShape):
            level = int(round(math.log((self.vertex_count - 2)/10.0,4)))
            verts, tris = icosphere(level)
            return verts*self.shape.radius, tris
        if isinstance(self.shape,BoxShape):
            corners = self.shape.corners()
            return corners, ConvexHull(corners).simplices
        return self.shape.vertices, self.shape.triangles

    def to_json(self):
        return {
            "object_id" : self.object_id,
            "kind" : self.kind,
            "vertex_count" : self.vertex_count,
            "scale" : self.scale,
            "mass" : self.mass,
            "position" : self.position,
            "orientation" : self.orientation,
            "complexity" : complexity_bin(self)
        }


def fibonacci_ellipsoid(n,axes):
    """n points spread evenly over an ellipsoid with the given semi axes."""
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0*i/n)
    azimuth = math.pi*(1.0 + math.sqrt(5.0))*i
    unit = np.stack([np.cos(azimuth)*np.sin(polar),np.sin(azimuth)*np.sin(polar),np.cos(polar)],axis=1)
    return unit*np.asarray(axes,float)


def _yaw_quaternion(angle):
    return np.array([math.cos(angle/2.0),0.0,0.0,math.sin(angle/2.0)])


def make_object(kind,seed,size="regular"):
    """Generates one object deterministically from (kind, size, seed).

    Raises:
        LABOClientError: on an unknown kind or size
    """
    if kind not in KINDS:
        raise LABOClientError(f"unknown object kind {kind}")
    if size not in SIZES:
        raise LABOClientError(f"unknown object size {size}")
    rng = np.random.default_rng(int(seed))
    mass = float(rng.uniform(*_MASS))
    yaw = float(rng.uniform(0.0,2*math.pi))
    object_id = f"{kind}-{size}-{int(seed)}"
    if kind == "sphere":
        radius = float(rng.uniform(*_RANGES[size]["sphere"]))
        level = int(rng.integers(2,5))
        shape = SphereShape(radius)
        count = 10*4**level + 2
    elif kind == "box":
        shape = BoxShape(rng.uniform(*_RANGES[size]["box"],size=3))
        count = 8
    elif kind == "plate":
        shape = BoxShape([rng.uniform(*r) for r in _PLATE])
        count = 8
    else:
        lo, hi = _POLY_VERTICES
        count = int(round(math.exp(rng.uniform(math.log(lo),math.log(hi)))))
        axes = rng.uniform(*_RANGES[size]["polyhedron"],size=3)
        shape = HullShape(fibonacci_ellipsoid(count,axes))
    return ObjectModel(object_id,kind,shape,count,shape.bounding_radius,mass,orientation=_yaw_quaternion(yaw))


def generate_objects(kind,count,seed,size="regular"):
    """A list of ``count`` objects of one kind.

    Object seeds are drawn from the ``objects`` stream of ``seed``, so the
    i-th object does not depend on ``count``.

    Raises:
        LABOClientError: if count is not positive or the kind is unknown
    """
    if count <= 0:
        raise LABOClientError("object count must be positive")
    if kind not in KINDS:
        raise LABOClientError(f"unknown object kind {kind}")
    seeds = SeedTree(seed)
    return [make_object(kind,seeds.integer("objects",KINDS.index(kind),i) % 2**31,size) for i in range(count)]


def complexity_bin(obj):
    """low (< 5000 vertices), high (> 7000) or medium."""
    if obj.vertex_count < LOW_VERTICES:
        return "low"
    if obj.vertex_count > HIGH_VERTICES:
        return "high"
    return "medium"


def read_obj(path):
    """Parses a Wavefront file holding vertices and triangular faces.

    Returns:
        (vertices, triangles) with zero based indices

    Raises:
        UnsupportedMesh: on non triangular faces, bad indices or a mesh that
            fails the watertight check
    """
    vertices, faces = [], []
    with open(path,'r') as stream:
        for line in stream:
            parts = line.split()
            if not parts or parts[0].startswith('#'):
                continue
            if parts[0] == 'v':
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == 'f':
                if len(parts) != 4:
                    raise UnsupportedMesh(f"only triangular faces are supported, got {len(parts)-1} corners")
                idx = [int(p.split('/')[0]) for p in parts[1:]]
                faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
    if not vertices or not faces:
        raise UnsupportedMesh(f"{path} holds no triangles")
    vertices = np.array(vertices,float)
    faces = np.array(faces,dtype=int)
    if faces.min() < 0 or faces.max() >= vertices.shape[0]:
        raise UnsupportedMesh("face refers to a missing vertex")
    check_watertight(faces)
    return vertices, faces


def write_obj(path,vertices,triangles):
    """Writes a triangle mesh in Wavefront format."""
    with open(path,'w') as stream:
        for v in vertices:
            stream.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in triangles:
            stream.write(f"f {t[0]+1} {t[1]+1} {t[2]+1}\n")


def load_mesh_object(path,scale=None,mass=1.0):
    """Imports a watertight mesh; contacts use its convex hull.

    The mesh is centred on its vertex centroid and, when ``scale`` is given,
    resized so its bounding radius equals ``scale``.
    """
    vertices, faces = read_obj(path)
    vertices = vertices - vertices.mean(axis=0)
    if scale is not None:
        vertices = vertices*(scale/np.max(np.linalg.norm(vertices,axis=1)))
    shape = HullShape(vertices)
    return ObjectModel(f"mesh:{path}","mesh",shape,int(vertices.shape[0]),shape.bounding_radius,float(mass))


def object_from_id(object_id):
    """Rebuilds an object from its id."""
    if object_id.startswith("mesh:"):
        return load_mesh_object(object_id[len("mesh:"):])
    try:
        kind, size, seed = object_id.split("-",2)
        return make_object(kind,int(seed),size)
    except ValueError as ex:
        raise LABOClientError(f"malformed object id {object_id}") from ex


@dataclass
class GraspTask:
    """One grasp type applied to one object. The hand pose is fixed by the
    grasp type."""
    grasp_type: str
    object: ObjectModel
    seed: int = 0

    def __post_init__(self):
        if self.grasp_type not in GRASP_TYPES:
            raise LABOClientError(f"unknown grasp type {self.grasp_type}")

    @property
    def hand_pose(self):
        """World from hand rotation."""
        return HAND_POSES[self.grasp_type]

    def to_json(self):
        return {"grasp_type" : self.grasp_type, "object_id" : self.object.object_id, "seed" : self.seed}


@dataclass
class TaskSuite:
    """Ordered training tasks plus held out test tasks.

    Index i of every success vector refers to ``tasks[i]``.
    """
    tasks: List[GraspTask]
    test_tasks: List[GraspTask] = field(default_factory=list)

    @property
    def n_tasks(self):
        return len(self.tasks)

    def type_indices(self,grasp_type,split="train"):
        """Indices of the tasks of one grasp type."""
        tasks = self.tasks if split == "train" else self.test_tasks
        return [i for i,t in enumerate(tasks) if t.grasp_type == grasp_type]

    def manifest(self):
        """Plain description of the suite, enough to rebuild it."""
        return {
            "version" : MANIFEST_VERSION,
            "train" : [t.to_json() for t in self.tasks],
            "test" : [t.to_json() for t in self.test_tasks]
        }

    def content_hash(self):
        return hash_of(self.manifest())


def type_counts(n_tasks):
    """Split of n tasks over power, pinch and lateral in the ratio 7:7:6."""
    n_power = n_tasks*7//20
    n_pinch = n_tasks*7//20
    return {"power" : n_power, "pinch" : n_pinch, "lateral" : n_tasks - n_power - n_pinch}


def _tasks(counts,seeds,stream):
    tasks = []
    for t,grasp_type in enumerate(GRASP_TYPES):
        for i in range(counts[grasp_type]):
            seed = seeds.integer(stream,t,i) % 2**31
            if grasp_type == "lateral":
                obj = make_object("plate",seed)
            else:
                kind = KINDS[i % 3]
                obj = make_object(kind,seed,"regular" if grasp_type == "power" else "small")
            tasks.append(GraspTask(grasp_type,obj,seed))
    return tasks


def build_suite(n_tasks=160,n_test=48,seed=0):
    """The procedural benchmark.

    Power tasks cycle through spheres, boxes and polyhedra; pinch tasks use
    small versions of the same kinds; lateral tasks use thin plates. Test
    objects come from a separate seed stream.
    """
    if n_tasks <= 0:
        raise LABOClientError("a suite needs at least one task")
    seeds = SeedTree(seed)
    train = _tasks(type_counts(n_tasks),seeds,"suite")
    test = _tasks(type_counts(n_test),seeds,"suite-test") if n_test > 0 else []
    return TaskSuite(train,test)


def write_manifest(suite,path):
    with open(path,'w') as stream:
        json.dump(suite.manifest(),stream,indent=2)


def read_manifest(path):
    """Rebuilds a TaskSuite from a manifest file.

    Raises:
        LABOClientError: if the file is unreadable, of another version or
            holds a malformed task entry
    """
    try:
        with open(path,'r') as stream:
            data = json.load(stream)
    except (OSError,json.JSONDecodeError) as ex:
        raise LABOClientError(f"cannot read manifest {path}") from ex
    if not isinstance(data,dict) or data.get("version") != MANIFEST_VERSION:
        version = data.get("version") if isinstance(data,dict) else None
        raise LABOClientError(f"unsupported manifest version {version}")
    def rebuild(entries):
        return [GraspTask(e["grasp_type"],object_from_id(e["object_id"]),int(e["seed"])) for e in entries]
    try:
        return TaskSuite(rebuild(data["train"]),rebuild(data.get("test",[])))
    except (KeyError,ValueError,TypeError) as ex:
        raise LABOClientError(f"malformed task entry in manifest {path}: {ex!r}") from ex
