"""Shared fixtures: the three example networks and a random-network factory."""

import numpy as np
import pytest

from fluxnet import assemble_model, kalman_controllable, lineality_space, parse_spec

EPS = 1.0 / (2.0 * np.sqrt(2.0))


def lozenge_doc(thetas):
    return {
        "oscillators": ["o1", "o2", "o3", "o4"],
        "kappa_sq": [[1.0, 0.0, EPS, EPS],
                     [0.0, 1.0, EPS, EPS],
                     [EPS, EPS, 1.0, 0.0],
                     [EPS, EPS, 0.0, 1.0]],
        "boundary": [{"id": f"o{i+1}", "gamma": 1.0, "theta": float(t)}
                     for i, t in enumerate(thetas)],
        "temperature_ratios": True,
    }


def triangular_doc(thetas):
    a, b = EPS, 0.25
    k2 = (np.array([[0, a, 0, 0, 0, a],
                    [a, 0, a, b, 0, b],
                    [0, a, 0, a, 0, 0],
                    [0, b, a, 0, a, b],
                    [0, 0, 0, a, 0, a],
                    [a, b, 0, b, a, 0]]) + np.eye(6)).tolist()
    return {
        "oscillators": [f"o{i}" for i in range(1, 7)],
        "kappa_sq": k2,
        "boundary": [{"id": f"o{i}", "gamma": 1.0, "theta": float(t)}
                     for i, t in zip((1, 3, 5), thetas)],
        "temperature_ratios": True,
    }


def heatpump_doc(theta1=10.0):
    a, b = -40.0, -20.0
    k2 = [[1 - a, 0, 0, 0, a, 0],
          [0, 1 - b, 0, 0, b, 0],
          [0, 0, 1 - a, 0, 0, a],
          [0, 0, 0, 1 - b, 0, b],
          [a, b, 0, 0, 1 - 2 * a - b, a],
          [0, 0, a, b, a, 1 - 2 * a - b]]
    thetas = [theta1, 3.6, 7.0, 6.8]
    return {
        "oscillators": [f"o{i}" for i in range(1, 7)],
        "kappa_sq": k2,
        "boundary": [{"id": f"o{i+1}", "gamma": 1.0, "theta": float(t)}
                     for i, t in enumerate(thetas)],
        "temperature_ratios": True,
    }


def single_oscillator_doc():
    return {
        "oscillators": ["o1"],
        "kappa_sq": [[1.0]],
        "boundary": [{"id": "o1", "gamma": 1.0, "theta": 1.0}],
    }


def random_network_doc(rng, n_max=6):
    """Random SPD stiffness with a random driven subset; retried until
    controllable (dense couplings almost surely are)."""
    for _ in range(20):
        n = int(rng.integers(1, n_max + 1))
        d = int(rng.integers(1, n + 1))
        W = rng.normal(size=(n, n))
        k2 = W @ W.T + float(rng.uniform(0.3, 1.0)) * n * np.eye(n)
        k2 /= np.linalg.norm(k2, 2) / 2.0
        boundary = sorted(rng.choice(n, size=d, replace=False).tolist())
        doc = {
            "oscillators": [f"o{i}" for i in range(n)],
            "kappa_sq": k2.tolist(),
            "boundary": [{"id": f"o{i}",
                          "gamma": float(rng.uniform(0.5, 2.0)),
                          "theta": float(rng.uniform(0.5, 2.0))}
                         for i in boundary],
        }
        model = assemble_model(parse_spec(doc))
        if kalman_controllable(model)[0]:
            return doc
    raise RuntimeError("failed to draw a controllable network")


@pytest.fixture(scope="session")
def lozenge_eq():
    return assemble_model(parse_spec(lozenge_doc([1, 1, 1])))


@pytest.fixture(scope="session")
def lozenge_124():
    return assemble_model(parse_spec(lozenge_doc([1, 2, 4])))


@pytest.fixture(scope="session")
def lozenge_1264():
    return assemble_model(parse_spec(lozenge_doc([1, 2, 64])))


@pytest.fixture(scope="session")
def triangular_eq():
    return assemble_model(parse_spec(triangular_doc([1, 1, 1])))


@pytest.fixture(scope="session")
def heatpump():
    return assemble_model(parse_spec(heatpump_doc()))


@pytest.fixture(scope="session")
def single_oscillator():
    return assemble_model(parse_spec(single_oscillator_doc()))


@pytest.fixture(scope="session")
def lozenge_124_geometry(lozenge_124):
    return lineality_space(lozenge_124)


@pytest.fixture(scope="session")
def lozenge_1264_geometry(lozenge_1264):
    return lineality_space(lozenge_1264)


@pytest.fixture(scope="session")
def heatpump_geometry(heatpump):
    return lineality_space(heatpump)


def random_tilt_in_D0(rng, model):
    """Uniform draw from the open box between zero and the inverse temperatures."""
    return rng.uniform(0.02, 0.98, size=model.d) * model.theta_inv


def gap_arc_probe(model, geometry, angle, h=1e-5):
    """Point on the finite-region boundary along a gap-binding ray, plus the
    outward normal of the boundary there (finite differences of the
    feasibility margin)."""
    from fluxnet.cgf import section_inf_boundary, sinf_margin

    u = geometry.from_frame(np.array([np.cos(angle), np.sin(angle)]))
    r = section_inf_boundary(model, geometry, u, tol=1e-8)
    xi_b = r * u
    grad = np.array([
        (sinf_margin(model, geometry, xi_b + h * geometry.frame[j])
         - sinf_margin(model, geometry, xi_b - h * geometry.frame[j])) / (2 * h)
        for j in range(geometry.section_dim)])
    eta_frame = -grad / np.linalg.norm(grad)
    return xi_b, geometry.from_frame(eta_frame)
