"""Object geometry for the grasp evaluator.

Three convex primitives are supported, all expressed in their own frame and
placed in the hand frame through ``Placed``:

* ``SphereShape`` and ``BoxShape`` with exact signed distances,
* ``HullShape`` for polyhedra and imported meshes. Its signed distance is the
  support function bound max_k (u_k . x - h(u_k)), which never exceeds the
  true distance; exact contact points come from per-triangle closest point
  queries.

The vectorised closest point routines (point-triangle, segment-segment) are
also used for the capsule model of the hand.
"""
import math
import numpy as np
from scipy.spatial import ConvexHull
from LABOToolkit.utils import UnsupportedMesh

EPS = 1e-12

def _dot(a,b):
    return np.einsum('...i,...i->...',a,b)

def closest_point_triangles(p,a,b,c):
    """Closest points on many triangles to one point.

    Args:
        p: (3,) query point
        a, b, c: (T,3) triangle corners

    Returns:
        (T,3) closest point on each triangle
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab,ap)
    d2 = _dot(ac,ap)
    bp = p - b
    d3 = _dot(ab,bp)
    d4 = _dot(ac,bp)
    cp = p - c
    d5 = _dot(ab,cp)
    d6 = _dot(ac,cp)
    vc = d1*d4 - d3*d2
    vb = d5*d2 - d1*d6
    va = d3*d6 - d5*d4
    with np.errstate(divide='ignore',invalid='ignore'):
        v_ab = np.where(np.abs(d1-d3) > EPS, d1/(d1-d3), 0.0)
        w_ac = np.where(np.abs(d2-d6) > EPS, d2/(d2-d6), 0.0)
        e_bc = (d4-d3) + (d5-d6)
        w_bc = np.where(np.abs(e_bc) > EPS, (d4-d3)/e_bc, 0.0)
        denom = va + vb + vc
        v_in = np.where(np.abs(denom) > EPS, vb/denom, 0.0)
        w_in = np.where(np.abs(denom) > EPS, vc/denom, 0.0)
    inside = a + ab*v_in[:,None] + ac*w_in[:,None]
    conditions = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4-d3) >= 0) & ((d5-d6) >= 0),
    ]
    choices = [
        a,
        b,
        a + ab*v_ab[:,None],
        c,
        a + ac*w_ac[:,None],
        b + (c-b)*w_bc[:,None],
    ]
    out = inside
    # np.select picks the first true condition; apply in reverse so earlier wins
    for cond,choice in reversed(list(zip(conditions,choices))):
        out = np.where(cond[:,None],choice,out)
    return out


def segment_distance(p1,q1,p2,q2):
    """Distances between pairs of segments [p1,q1] and [p2,q2].

    All inputs broadcast to (...,3); degenerate segments act as points.
    """
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = _dot(d1,d1)
    e = _dot(d2,d2)
    f = _dot(d2,r)
    c = _dot(d1,r)
    b = _dot(d1,d2)
    denom = a*e - b*b
    with np.errstate(divide='ignore',invalid='ignore'):
        s = np.where(denom > EPS, np.clip((b*f - c*e)/denom,0.0,1.0), 0.0)
        t = np.where(e > EPS, (b*s + f)/e, 0.0)
        s_lo = np.where(a > EPS, np.clip(-c/a,0.0,1.0), 0.0)
        s_hi = np.where(a > EPS, np.clip((b-c)/a,0.0,1.0), 0.0)
    s = np.where(t < 0.0, s_lo, np.where(t > 1.0, s_hi, s))
    t = np.clip(t,0.0,1.0)
    # point-like first segment
    s = np.where(a <= EPS, 0.0, s)
    with np.errstate(divide='ignore',invalid='ignore'):
        t = np.where(a <= EPS, np.where(e > EPS, np.clip(f/e,0.0,1.0), 0.0), t)
    c1 = p1 + d1*s[...,None]
    c2 = p2 + d2*t[...,None]
    return np.linalg.norm(c1 - c2,axis=-1)


def icosphere(level):
    """Unit icosphere with 10 * 4**level + 2 vertices.

    Returns:
        (vertices, triangles)
    """
    t = (1.0 + math.sqrt(5.0))/2.0
    verts = [
        (-1,t,0),(1,t,0),(-1,-t,0),(1,-t,0),
        (0,-1,t),(0,1,t),(0,-1,-t),(0,1,-t),
        (t,0,-1),(t,0,1),(-t,0,-1),(-t,0,1)
    ]
    verts = [np.array(v,float)/np.linalg.norm(v) for v in verts]
    faces = [
        (0,11,5),(0,5,1),(0,1,7),(0,7,10),(0,10,11),
        (1,5,9),(5,11,4),(11,10,2),(10,7,6),(7,1,8),
        (3,9,4),(3,4,2),(3,2,6),(3,6,8),(3,8,9),
        (4,9,5),(2,4,11),(6,2,10),(8,6,7),(9,8,1)
    ]
    for _ in range(level):
        cache = {}
        def midpoint(i,j):
            key = (min(i,j),max(i,j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m/np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]
        refined = []
        for i,j,k in faces:
            a = midpoint(i,j)
            b = midpoint(j,k)
            c = midpoint(k,i)
            refined.extend([(i,a,c),(j,b,a),(k,c,b),(a,b,c)])
        faces = refined
    return np.array(verts), np.array(faces,dtype=int)


def quaternion_matrix(q):
    """Rotation matrix of a unit quaternion (w, x, y, z)."""
    w,x,y,z = np.asarray(q,float)/np.linalg.norm(q)
    return np.array([
        [1-2*(y*y+z*z), 2*(x*y-w*z), 2*(x*z+w*y)],
        [2*(x*y+w*z), 1-2*(x*x+z*z), 2*(y*z-w*x)],
        [2*(x*z-w*y), 2*(y*z+w*x), 1-2*(x*x+y*y)]
    ])


class SphereShape:
    """Sphere of the given radius centred on the origin."""
    kind = "sphere"

    def __init__(self,radius):
        self.radius = float(radius)

    def sdf(self,points):
        """Signed distance of (N,3) local points."""
        return np.linalg.norm(points,axis=-1) - self.radius

    def closest(self,point):
        """Closest surface point and outward normal."""
        n = np.linalg.norm(point)
        normal = point/n if n > EPS else np.array([0.0,0.0,1.0])
        return normal*self.radius, normal

    def support(self,direction):
        """max over the shape of direction . x"""
        return self.radius*np.linalg.norm(direction)

    def extreme_points(self,direction,tol):
        """Surface points within tol of the support plane in direction."""
        u = direction/np.linalg.norm(direction)
        return (u*self.radius)[None,:]

    @property
    def bounding_radius(self):
        return self.radius


class BoxShape:
    """Axis aligned box centred on the origin with the given half extents."""
    kind = "box"

    def __init__(self,half_extents):
        self.half = np.asarray(half_extents,float)

    def sdf(self,points):
        """Signed distance of (N,3) local points."""
        q = np.abs(points) - self.half
        outside = np.linalg.norm(np.maximum(q,0.0),axis=-1)
        inside = np.minimum(np.max(q,axis=-1),0.0)
        return outside + inside

    def closest(self,point):
        """Closest surface point and outward normal."""
        q = np.abs(point) - self.half
        if np.any(q > 0):
            c = np.clip(point,-self.half,self.half)
            d = point - c
            return c, d/np.linalg.norm(d)
        axis = int(np.argmax(q))
        c = point.copy()
        sign = 1.0 if point[axis] >= 0 else -1.0
        c[axis] = sign*self.half[axis]
        normal = np.zeros(3)
        normal[axis] = sign
        return c, normal

    def support(self,direction):
        return float(np.sum(self.half*np.abs(direction)))

    def corners(self):
        """The eight corners."""
        signs = np.array([[sx,sy,sz] for sx in (-1,1) for sy in (-1,1) for sz in (-1,1)],float)
        return signs*self.half

    def extreme_points(self,direction,tol):
        c = self.corners()
        h = c @ direction
        return c[h >= h.max() - tol]

    @property
    def bounding_radius(self):
        return float(np.linalg.norm(self.half))


class HullShape:
    """Convex hull of a vertex set, with the triangles used for contacts.

    Attributes:
        vertices: (V,3) vertex positions
        triangles: (T,3) vertex indices of the surface triangles
        directions: (K,3) unit directions of the support function bound
        offsets: (K,) support values h(u_k)
    """
    kind = "hull"
    MAX_FACE_DIRECTIONS = 1024

    def __init__(self,vertices,triangles=None):
        self.vertices = np.asarray(vertices,float)
        hull = ConvexHull(self.vertices)
        self.triangles = np.asarray(triangles if triangles is not None else hull.simplices,dtype=int)
        normals = hull.equations[:,:3]
        if normals.shape[0] <= self.MAX_FACE_DIRECTIONS:
            directions = np.unique(np.round(normals,12),axis=0)
        else:
            directions,_ = icosphere(3)
        self.directions = directions/np.linalg.norm(directions,axis=1,keepdims=True)
        self.offsets = np.max(self.vertices @ self.directions.T,axis=0)
        self._corners = [self.vertices[self.triangles[:,i]] for i in range(3)]
        self._radius = float(np.max(np.linalg.norm(self.vertices,axis=1)))

    def sdf(self,points):
        """Support function lower bound of the signed distance."""
        points = np.atleast_2d(points)
        return np.max(points @ self.directions.T - self.offsets,axis=-1)

    def closest(self,point):
        """Closest point on the surface triangles and its outward normal."""
        a,b,c = self._corners
        cps = closest_point_triangles(point,a,b,c)
        d = np.linalg.norm(cps - point,axis=1)
        i = int(np.argmin(d))
        cp = cps[i]
        face = np.cross(b[i]-a[i],c[i]-a[i])
        face = face/max(np.linalg.norm(face),EPS)
        if np.dot(face,a[i]) < 0:
            face = -face
        offset = point - cp
        if d[i] > 1e-9 and self.sdf(point[None,:])[0] > 0:
            return cp, offset/d[i]
        return cp, face

    def support(self,direction):
        return float(np.max(self.vertices @ direction))

    def extreme_points(self,direction,tol,limit=8):
        h = self.vertices @ direction
        pts = self.vertices[h >= h.max() - tol]
        if pts.shape[0] > limit:
            pts = pts[np.linspace(0,pts.shape[0]-1,limit).astype(int)]
        return pts

    @property
    def bounding_radius(self):
        return self._radius


class Placed:
    """A shape posed in the hand frame: x_hand = R x_local + p."""
    def __init__(self,shape,rotation,position):
        self.shape = shape
        self.rotation = np.asarray(rotation,float)
        self.position = np.asarray(position,float)

    def to_local(self,points):
        return (np.asarray(points,float) - self.position) @ self.rotation

    def sdf(self,points):
        """Signed distance of hand frame points."""
        return self.shape.sdf(self.to_local(points))

    def closest(self,point):
        cp, n = self.shape.closest(self.to_local(point[None,:])[0])
        return self.rotation @ cp + self.position, self.rotation @ n

    def support(self,direction):
        return self.shape.support(self.rotation.T @ direction) + float(np.dot(direction,self.position))

    def extreme_points(self,direction,tol):
        pts = self.shape.extreme_points(self.rotation.T @ direction,tol)
        return pts @ self.rotation.T + self.position

    @property
    def bounding_radius(self):
        return self.shape.bounding_radius


def check_watertight(triangles):
    """Euler and edge manifold check of a closed triangle mesh.

    Raises:
        UnsupportedMesh: if an edge is not shared by exactly two triangles or
            V - E + F != 2
    """
    triangles = np.asarray(triangles,dtype=int)
    edges = np.sort(np.concatenate([triangles[:,[0,1]],triangles[:,[1,2]],triangles[:,[2,0]]]),axis=1)
    unique, counts = np.unique(edges,axis=0,return_counts=True)
    if np.any(counts != 2):
        raise UnsupportedMesh("mesh is not watertight: some edges are not shared by two faces")
    n_vertices = np.unique(triangles).shape[0]
    euler = n_vertices - unique.shape[0] + triangles.shape[0]
    if euler != 2:
        raise UnsupportedMesh(f"mesh Euler characteristic is {euler}, expected 2")
