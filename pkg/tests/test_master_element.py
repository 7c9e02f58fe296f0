import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import legendre as npleg

from otmesh.master_element import NoConvergence, build_master

degrees = st.integers(min_value=1, max_value=8)
coord = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


@pytest.mark.parametrize("k, nn, nq", [(1, 4, 9), (4, 25, 36)])
def test_table_sizes(k, nn, nq):
    me = build_master(k)
    assert me.n_nodes == nn
    assert me.n_quad == nq


@pytest.mark.parametrize("k", range(1, 9))
def test_weights_sum_to_four(k):
    assert abs(build_master(k).quad_weights.sum() - 4.0) <= 1e-12


@pytest.mark.parametrize("k", range(1, 9))
def test_kronecker_at_nodes(k):
    me = build_master(k)
    assert np.allclose(me.eval_basis(me.nodes), np.eye(me.n_nodes), atol=1e-12)


def test_k1_corner_ordering():
    me = build_master(1)
    assert np.allclose(me.eval_basis(np.array([-1.0, -1.0])), [1, 0, 0, 0])


def test_k2_centre_node():
    me = build_master(2)
    vals = me.eval_basis(np.array([0.0, 0.0]))
    assert vals[4] == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(np.delete(vals, 4), 0.0, atol=1e-14)


@pytest.mark.parametrize("k", [0, 9, -1, 2.5])
def test_degree_out_of_range(k):
    with pytest.raises(ValueError):
        build_master(k)


@given(degrees, coord, coord)
def test_partition_of_unity(k, a, b):
    me = build_master(k)
    vals, grads = me.eval_basis(np.array([a, b]), derivative=True)
    assert abs(vals.sum() - 1.0) <= 1e-12
    assert np.allclose(grads.sum(axis=1), 0.0, atol=1e-10)


@given(degrees, st.integers(min_value=0, max_value=40), st.integers(min_value=0, max_value=40))
def test_quadrature_exactness(k, p, q):
    """Tensor Gauss rule with k+2 points per direction is exact up to degree 2k+3 per variable."""
    me = build_master(k)
    nmax = 2 * (k + 2) - 1
    p, q = p % (nmax + 1), q % (nmax + 1)
    xi = me.quad_points
    approx = np.sum(me.quad_weights * xi[:, 0] ** p * xi[:, 1] ** q)

    def mono(n):
        return 0.0 if n % 2 else 2.0 / (n + 1)

    assert approx == pytest.approx(mono(p) * mono(q), abs=1e-12)


@pytest.mark.parametrize("k", range(1, 9))
def test_xi1_squared(k):
    me = build_master(k)
    assert np.sum(me.quad_weights * me.quad_points[:, 0] ** 2) == pytest.approx(4.0 / 3.0, abs=1e-12)


def test_k3_rule_against_brute_force():
    me = build_master(3)
    x = me.quad_points[:, 0]
    bx, bw = npleg.leggauss(40)
    brute8 = 2.0 * np.sum(bw * bx**8)
    assert np.sum(me.quad_weights * x**9) == pytest.approx(0.0, abs=1e-14)
    assert np.sum(me.quad_weights * x**8) == pytest.approx(2.0 / 9.0 * 2.0, abs=1e-12)
    assert brute8 == pytest.approx(4.0 / 9.0, abs=1e-13)


@pytest.mark.parametrize("k", [1, 3, 6])
def test_constant_modal(k):
    me = build_master(k)
    modal = me.nodal_to_modal(np.full(me.n_nodes, 3.0))
    assert modal[0] == pytest.approx(6.0, abs=1e-12)
    assert np.allclose(modal[1:], 0.0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_legendre_single_mode(k):
    me = build_master(k)
    modal = me.nodal_to_modal(me.nodes[:, 0])
    assert np.count_nonzero(np.abs(modal) > 1e-12) == 1


@pytest.mark.parametrize("k", range(1, 9))
def test_modal_roundtrip(k, rng):
    me = build_master(k)
    v = rng.normal(size=me.n_nodes)
    assert np.max(np.abs(me.modal_to_nodal(me.nodal_to_modal(v)) - v)) <= 1e-12


@pytest.mark.parametrize("k", [1, 2, 4])
def test_truncation_keeps_k_squared_modes(k):
    assert build_master(k).truncation_mask().sum() == k * k


def _bilinear_square():
    me = build_master(1)
    return me, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def test_inverse_map_centre():
    me, nodes = _bilinear_square()
    xi, inside = me.inverse_map(nodes, np.array([0.5, 0.5]))
    assert np.allclose(xi, 0.0, atol=1e-12)
    assert inside


@pytest.mark.parametrize("k", [2, 3])
def test_inverse_map_at_nodes(k):
    me = build_master(k)
    elem = 0.5 * (me.nodes + 1.0) + 0.03 * np.sin(3 * me.nodes[:, ::-1])
    for j in range(me.n_nodes):
        xi, _ = me.inverse_map(elem, elem[j])
        assert np.allclose(xi, me.nodes[j], atol=1e-9)


def test_inverse_map_affine_oracle(rng):
    me = build_master(1)
    A = np.array([[0.7, 0.2], [-0.1, 0.5]])
    b = np.array([0.3, -1.0])
    nodes = me.nodes @ A.T + b
    for _ in range(20):
        x = rng.uniform(-1, 1, 2) @ A.T + b
        xi, inside = me.inverse_map(nodes, x)
        assert np.allclose(xi, np.linalg.solve(A, x - b), atol=1e-12)
        assert inside


def test_inverse_map_outside_flag():
    me, nodes = _bilinear_square()
    xi, inside = me.inverse_map(nodes, np.array([1.5, 0.5]))
    assert not inside
    assert xi[0] == pytest.approx(2.0)


def test_inverse_map_no_convergence():
    me, nodes = _bilinear_square()
    with pytest.raises(NoConvergence):
        me.inverse_map(nodes, np.array([1e6, -3e7]), max_newton=2)


@given(
    st.integers(min_value=1, max_value=5),
    st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4),
    st.floats(-0.95, 0.95),
    st.floats(-0.95, 0.95),
)
def test_inverse_map_roundtrip(k, wiggle, a, b):
    me = build_master(k)
    r = me.nodes
    # mildly distorted element: affine stretch plus a smooth bounded perturbation
    w = 0.04 * np.asarray(wiggle)
    elem = np.column_stack(
        [
            1.3 * r[:, 0] + 0.2 * r[:, 1] + w[0] * np.sin(np.pi * r[:, 1]) + w[1] * r[:, 0] * r[:, 1],
            0.9 * r[:, 1] - 0.1 * r[:, 0] + w[2] * np.cos(np.pi * r[:, 0]) + w[3] * r[:, 0] ** 2,
        ]
    )
    x = me.forward_map(elem, np.array([a, b]))[0]
    xi, inside = me.inverse_map(elem, x)
    back = me.forward_map(elem, xi)[0]
    assert np.linalg.norm(back - x) <= 1e-10 * max(np.linalg.norm(x), 1.0)
    assert inside
