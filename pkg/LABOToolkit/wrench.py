"""Contact wrench space of a grasp.

Each contact contributes the edges of a discretised Coulomb friction cone; a
load is resisted iff its negation is a nonnegative combination of the contact
wrenches. Feasibility is solved with nonnegative least squares, whose residual
is the part of the load the grasp cannot hold.
"""
import itertools
import math
import numpy as np
from scipy.optimize import nnls

def tangent_basis(normal):
    """Two unit vectors completing ``normal`` to an orthonormal frame."""
    n = normal/np.linalg.norm(normal)
    helper = np.array([1.0,0.0,0.0]) if abs(n[0]) < 0.9 else np.array([0.0,1.0,0.0])
    t1 = np.cross(n,helper)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n,t1)

def friction_cone(normal,mu,edges=8):
    """Edge directions of the linearised friction cone.

    Args:
        normal: force direction into the object
        mu: friction coefficient
        edges: number of cone edges

    Returns:
        (edges, 3) array
    """
    n = normal/np.linalg.norm(normal)
    t1, t2 = tangent_basis(n)
    beta = 2*math.pi*np.arange(edges)/edges
    return n + mu*(np.cos(beta)[:,None]*t1 + np.sin(beta)[:,None]*t2)

def grasp_matrix(points,normals,center,mu,edges=8):
    """Columns [e; (p - c) x e] for every cone edge of every contact.

    Returns:
        (6, n_contacts*edges) array; (6, 0) without contacts
    """
    columns = []
    for p,n in zip(points,normals):
        cone = friction_cone(n,mu,edges)
        moment = np.cross(np.asarray(p) - center,cone)
        columns.append(np.hstack([cone,moment]).T)
    if not columns:
        return np.zeros((6,0))
    return np.hstack(columns)

def resist(G,wrench):
    """Best contact response to an external wrench.

    Returns:
        (coefficients, residual) where residual is the net wrench left acting
        on the object
    """
    wrench = np.asarray(wrench,float)
    if G.shape[1] == 0:
        return np.zeros(0), wrench.copy()
    x, _ = nnls(G,-wrench)
    return x, G @ x + wrench

def is_resisted(residual,wrench,rtol=1e-6):
    return float(np.linalg.norm(residual)) <= rtol*max(float(np.linalg.norm(wrench)),1.0)

def cone_contains(G,target,tol=1e-8):
    """Exhaustive check that target is a nonnegative combination of columns.

    Enumerates every set of rank(G) linearly independent columns and solves
    for exact coefficients. Slow; intended as a reference for small problems.
    """
    target = np.asarray(target,float)
    if np.linalg.norm(target) <= tol:
        return True
    if G.shape[1] == 0:
        return False
    rank = np.linalg.matrix_rank(G)
    scale = max(float(np.linalg.norm(target)),1.0)
    for subset in itertools.combinations(range(G.shape[1]),rank):
        cols = G[:,subset]
        if np.linalg.matrix_rank(cols) < rank:
            continue
        x, *_ = np.linalg.lstsq(cols,target,rcond=None)
        if np.linalg.norm(cols @ x - target) <= tol*scale and np.all(x >= -tol*scale):
            return True
    return False
