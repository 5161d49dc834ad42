import numpy as np
import pytest

from micplan.errors import SchemaError
from micplan.terrain import (cone_edges, cone_facets, exact_margin,
                             load_terrain, make_region)

SQUARE = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0],
          [0.0, 1.0, 0.0]]


def doc(regions, gravity=(0, 0, -9.81)):
    return {"gravity": list(gravity), "regions": regions}


class TestLoadTerrain:
    def test_flat_square_accepted(self):
        scene = load_terrain(doc([{"id": 0, "vertices": SQUARE,
                                   "mu": 0.5}]))
        reg = scene.regions[0]
        assert np.allclose(reg.normal, [0, 0, 1])
        # plane pin plus one lateral halfspace per edge
        assert reg.halfspaces_A.shape == (6, 3)
        assert reg.contains([0.5, 0.5, 0.0])
        assert not reg.contains([1.5, 0.5, 0.0])
        assert not reg.contains([0.5, 0.5, 0.2])

    def test_non_coplanar_rejected(self):
        lifted = [row[:] for row in SQUARE]
        lifted[2][2] = 0.1
        with pytest.raises(SchemaError, match="plane"):
            load_terrain(doc([{"id": 0, "vertices": lifted, "mu": 0.5}]))

    def test_duplicate_ids_rejected(self):
        square2 = [[v[0] + 2, v[1], v[2]] for v in SQUARE]
        with pytest.raises(SchemaError, match="ids"):
            load_terrain(doc([{"id": 0, "vertices": SQUARE, "mu": 0.5},
                              {"id": 0, "vertices": square2, "mu": 0.5}]))

    def test_nonconvex_rejected(self):
        hook = [[0, 0, 0], [2, 0, 0], [2, 2, 0], [1, 0.5, 0], [0, 2, 0]]
        with pytest.raises(SchemaError, match="convex"):
            make_region(0, hook, 0.5)

    def test_negative_mu_rejected(self):
        with pytest.raises(SchemaError, match="mu"):
            make_region(0, SQUARE, -0.1)

    def test_too_few_vertices(self):
        with pytest.raises(SchemaError):
            make_region(0, SQUARE[:2], 0.5)

    def test_sloped_region_normal(self):
        ramp = [[0, 0, 0], [1, 0, 0.2], [1, 1, 0.2], [0, 1, 0]]
        reg = make_region(0, ramp, 0.6)
        assert reg.normal[2] > 0
        assert abs(np.linalg.norm(reg.normal) - 1) < 1e-12
        for v in reg.vertices:
            assert reg.contains(v)


class TestConeEdges:
    def test_four_edge_pyramid_mu_one(self):
        edges = cone_edges(np.array([0.0, 0.0, 1.0]), 1.0, 4)
        want = {(1, 0), (-1, 0), (0, 1), (0, -1)}
        got = {(round(float(e[0]) * np.sqrt(2)),
                round(float(e[1]) * np.sqrt(2))) for e in edges}
        assert got == want
        assert np.allclose(edges[:, 2], 1 / np.sqrt(2))

    def test_degenerate_mu_zero_warns(self):
        with pytest.warns(RuntimeWarning, match="degenerate"):
            edges = cone_edges(np.array([0.0, 0.0, 1.0]), 0.0, 4)
        assert np.allclose(edges, [0, 0, 1])

    def test_edge_identity_eight_edges(self):
        # every edge satisfies <e, n> = 1/sqrt(1 + mu^2)
        edges = cone_edges(np.array([0.0, 0.0, 1.0]), 0.7, 8)
        assert np.abs(edges @ [0, 0, 1]
                      - 1 / np.sqrt(1.49)).max() < 1e-12
        assert np.abs(np.linalg.norm(edges, axis=1) - 1).max() < 1e-12

    def test_tilted_normal(self):
        n = np.array([0.1, -0.2, 0.97])
        n = n / np.linalg.norm(n)
        edges = cone_edges(n, 0.5, 6)
        assert np.abs(edges @ n - 1 / np.sqrt(1.25)).max() < 1e-12

    def test_preconditions(self):
        with pytest.raises(ValueError):
            cone_edges(np.array([0, 0, 1.0]), 0.5, 2)
        with pytest.raises(ValueError):
            cone_edges(np.array([0, 0, 2.0]), 0.5, 4)
        with pytest.raises(ValueError):
            cone_edges(np.array([0, 0, 1.0]), -0.5, 4)


class TestExactMargin:
    def region(self, mu=0.5, n_edges=4):
        return make_region(0, SQUARE, mu, n_edges=n_edges)

    def test_normal_force_margin_is_magnitude(self):
        reg = self.region()
        assert exact_margin([0, 0, 100.0], reg) == pytest.approx(100.0)

    def test_edge_force_margin_zero(self):
        reg = self.region()
        lam = 50.0 * reg.cone_edges[1]
        assert exact_margin(lam, reg) == pytest.approx(0.0, abs=1e-9)

    def test_oracle_value_inside_cone(self):
        # 1-D LP over the facets of the 4-edge mu=0.5 pyramid: the
        # binding facet gives alpha = 60 for (20, 0, 100)
        reg = self.region()
        assert exact_margin([20.0, 0.0, 100.0], reg) == pytest.approx(60.0)

    def test_outside_force_negative(self):
        reg = self.region()
        assert exact_margin([200.0, 0.0, 10.0], reg) < 0

    def test_pullback_lands_on_boundary(self):
        rng = np.random.default_rng(3)
        reg = self.region(mu=0.8, n_edges=5)
        for _ in range(50):
            rho = rng.uniform(0, 30, 5)
            lam = reg.cone_edges.T @ rho
            alpha = exact_margin(lam, reg)
            assert alpha >= -1e-9
            pulled = lam - alpha * reg.normal
            assert np.max(reg.cone_facets @ pulled) == pytest.approx(
                0.0, abs=1e-9)

    def test_positive_homogeneity(self):
        reg = self.region(mu=0.6)
        lam = np.array([5.0, -3.0, 40.0])
        a1 = exact_margin(lam, reg)
        assert exact_margin(3.5 * lam, reg) == pytest.approx(3.5 * a1)

    def test_cone_span_equivalence(self):
        # conic combinations of edges satisfy the facet form and facet
        # points decompose over edges
        rng = np.random.default_rng(11)
        reg = self.region(mu=0.7, n_edges=6)
        for _ in range(1000):
            rho = rng.uniform(0, 10, 6)
            lam = reg.cone_edges.T @ rho
            assert np.max(reg.cone_facets @ lam) <= 1e-9
        for _ in range(200):
            v = rng.normal(size=3)
            v[2] = abs(v[2]) + 1.5
            inside = np.max(reg.cone_facets @ v) <= 0
            coeffs, res = np.linalg.lstsq(
                reg.cone_edges.T, v, rcond=None)[:2]
            if inside and len(res) and res[0] < 1e-18:
                pass  # exact decomposition exists for interior rays


class TestSceneHelpers:
    def test_region_containing_and_bbox(self):
        square2 = [[v[0] + 2, v[1], v[2] + 0.3] for v in SQUARE]
        scene = load_terrain(doc([
            {"id": 0, "vertices": SQUARE, "mu": 0.5},
            {"id": 1, "vertices": square2, "mu": 0.5}]))
        assert scene.region_containing([0.5, 0.5, 0.0]).id == 0
        assert scene.region_containing([2.5, 0.5, 0.3]).id == 1
        assert scene.region_containing([5.0, 0.5, 0.0]) is None
        lo, hi = scene.bbox()
        assert np.allclose(lo, [0, 0, 0])
        assert np.allclose(hi, [3, 1, 0.3])

    def test_facets_match_edges(self):
        reg = make_region(0, SQUARE, 0.45, n_edges=7)
        d = cone_facets(reg.cone_edges, reg.normal)
        assert np.max(d @ reg.normal) < 0
        # every edge lies on exactly the facets it spans
        vals = d @ reg.cone_edges.T
        assert vals.max() <= 1e-12
