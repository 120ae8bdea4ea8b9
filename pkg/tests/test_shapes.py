"""Test object geometry
"""
import math
import numpy as np
import LABOToolkit
from LABOToolkit.shapes import (closest_point_triangles, segment_distance, icosphere,
                                quaternion_matrix, check_watertight)

sphere = LABOToolkit.SphereShape(1.5)
box = LABOToolkit.BoxShape([1.0,2.0,0.5])
cube = LABOToolkit.HullShape(LABOToolkit.BoxShape([1.0,1.0,1.0]).corners())

def test_sphere():
    """Test sphere distances and contacts
    """
    pts = np.array([[0.0,0.0,3.0],[0.0,0.0,0.0],[1.5,0.0,0.0]])
    assert np.allclose(sphere.sdf(pts),[1.5,-1.5,0.0])
    point, normal = sphere.closest(np.array([0.0,4.0,0.0]))
    assert np.allclose(point,[0.0,1.5,0.0]) and np.allclose(normal,[0.0,1.0,0.0])
    assert sphere.support(np.array([0.0,0.0,-1.0])) == 1.5
    assert sphere.extreme_points(np.array([0.0,0.0,-2.0]),0.01).shape == (1,3)

def test_box():
    """Test box distances and contacts
    """
    pts = np.array([[0.0,0.0,0.0],[2.0,0.0,0.0],[2.0,3.0,0.0]])
    assert np.allclose(box.sdf(pts),[-0.5,1.0,math.sqrt(2.0)])
    point, normal = box.closest(np.array([0.0,0.0,0.4]))
    assert np.allclose(point,[0.0,0.0,0.5]) and np.allclose(normal,[0.0,0.0,1.0])
    point, normal = box.closest(np.array([3.0,0.0,0.0]))
    assert np.allclose(point,[1.0,0.0,0.0]) and np.allclose(normal,[1.0,0.0,0.0])
    assert box.support(np.array([0.0,0.0,-1.0])) == 0.5
    assert box.extreme_points(np.array([0.0,0.0,-1.0]),1e-9).shape == (4,3)
    assert math.isclose(box.bounding_radius,math.sqrt(5.25))

def test_hull():
    """Test the support bound of a convex hull
    """
    face = np.array([[2.0,0.0,0.0],[0.0,0.0,0.5]])
    assert np.allclose(cube.sdf(face),[1.0,-0.5])
    corner = np.array([[2.0,2.0,2.0]])
    assert cube.sdf(corner)[0] <= math.sqrt(3.0) + 1e-12
    point, normal = cube.closest(np.array([3.0,0.2,0.1]))
    assert np.allclose(point,[1.0,0.2,0.1]) and np.allclose(normal,[1.0,0.0,0.0])
    assert cube.support(np.array([1.0,1.0,0.0])) == 2.0
    assert math.isclose(cube.bounding_radius,math.sqrt(3.0))

def test_closest_point_triangles():
    """Test closest points in the interior and the vertex regions
    """
    a = np.array([[0.0,0.0,0.0]]*2)
    b = np.array([[1.0,0.0,0.0]]*2)
    c = np.array([[0.0,1.0,0.0]]*2)
    inside = closest_point_triangles(np.array([0.2,0.2,1.0]),a,b,c)
    assert np.allclose(inside,[0.2,0.2,0.0])
    vertex = closest_point_triangles(np.array([2.0,-1.0,0.0]),a,b,c)
    assert np.allclose(vertex,[1.0,0.0,0.0])
    edge = closest_point_triangles(np.array([1.0,1.0,0.0]),a,b,c)
    assert np.allclose(edge,[0.5,0.5,0.0])

def test_segment_distance():
    """Test parallel, crossing and degenerate segments
    """
    zero, x = np.zeros(3), np.array([1.0,0.0,0.0])
    up = np.array([0.0,0.0,1.0])
    assert math.isclose(float(segment_distance(zero,x,up,x + up)),1.0)
    cross = segment_distance(np.array([-1.0,0.0,0.0]),x,np.array([0.0,-1.0,0.0]),np.array([0.0,1.0,0.0]))
    assert math.isclose(float(cross),0.0,abs_tol=1e-12)
    point = segment_distance(2*up,2*up,zero,x)
    assert math.isclose(float(point),2.0)
    batch = segment_distance(np.zeros((4,3)),np.tile(x,(4,1)),np.tile(up,(4,1)),np.tile(up + x,(4,1)))
    assert batch.shape == (4,)

def test_icosphere():
    """Test icosphere vertex counts
    """
    for level,count in [(0,12),(2,162),(4,2562)]:
        verts, tris = icosphere(level)
        assert verts.shape == (count,3)
        assert np.allclose(np.linalg.norm(verts,axis=1),1.0)
    check_watertight(icosphere(1)[1])

def test_placed():
    """Test shapes posed in the hand frame
    """
    R = quaternion_matrix([math.cos(math.pi/4),0.0,0.0,math.sin(math.pi/4)])
    assert np.allclose(R @ np.array([1.0,0.0,0.0]),[0.0,1.0,0.0])
    placed = LABOToolkit.Placed(box,R,np.array([0.0,0.0,3.0]))
    assert math.isclose(float(placed.sdf(np.array([[0.0,0.0,0.0]]))[0]),2.5)
    assert math.isclose(placed.support(np.array([1.0,0.0,0.0])),2.0)
    assert math.isclose(-placed.support(np.array([0.0,0.0,-1.0])),2.5)
    point, normal = placed.closest(np.array([0.0,0.0,5.0]))
    assert np.allclose(point,[0.0,0.0,3.5]) and np.allclose(normal,[0.0,0.0,1.0])

def test_watertight():
    """Test mesh checks
    """
    tetra = np.array([[0,1,2],[0,3,1],[1,3,2],[2,3,0]])
    check_watertight(tetra)
    try:
        check_watertight(tetra[:3])
        assert False
    except LABOToolkit.UnsupportedMesh:
        pass
