import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from diamond.degrade import add_awgn
from diamond.imagebuf import Image, rawf32_bytes
from diamond.nnexec import build_default_graph, save_bundle
from diamond.service import create_app

from phantoms import make_phantom


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def _b64(img: Image) -> str:
    return base64.b64encode(rawf32_bytes(img)).decode("ascii")


def _img(payload: str) -> Image:
    from diamond.imagebuf import image_from_rawf32

    return image_from_rawf32(base64.b64decode(payload))


def _restore_payload(**over):
    phantom = make_phantom()
    noisy, _ = add_awgn(phantom, 15.0, 7)
    payload = {
        "task": "denoise",
        "input_image": _b64(noisy),
        "reference_image": _b64(phantom),
        "degradation": {"kind": "identity", "boundary": "replicate",
                        "kernel_size": 3, "kernel_sigma": 0.5},
        "prior": {"kind": "gaussian_smooth", "sigma": 0.8},
        "iterate": {"mu": 1.0, "upsilon": 1.0, "step": [0.5], "delta": [0.0],
                    "epsilon": [0.01], "outer_iters": 8, "tol": 0.0},
    }
    payload.update(over)
    return payload


class TestHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["version"]


class TestMetricsEndpoint:
    def test_basic(self, client, rng):
        a = Image(rng.uniform(0, 1, (16, 16)).astype(np.float32))
        b = Image(np.clip(a.data + 0.01, 0, 1))
        resp = client.post("/metrics", json={"image_a": _b64(a), "image_b": _b64(b)})
        assert resp.status_code == 200
        body = resp.json()
        assert body["rmse"] > 0
        assert not body["psnr_infinite"]
        assert body["csv_line"].count(",") == 2

    def test_identical_pair_infinite(self, client):
        img = make_phantom()
        resp = client.post("/metrics", json={"image_a": _b64(img), "image_b": _b64(img)})
        body = resp.json()
        assert body["psnr_infinite"] and body["psnr"] is None
        assert body["rmse"] == 0.0

    def test_malformed_image_is_400(self, client):
        garbage = base64.b64encode(b"not an image").decode()
        resp = client.post("/metrics", json={"image_a": garbage, "image_b": garbage})
        assert resp.status_code == 400
        assert "metrics" in resp.json()["detail"]


class TestDegradeEndpoint:
    def test_identity_plus_noise(self, client):
        img = make_phantom()
        resp = client.post("/degrade", json={
            "image": _b64(img),
            "degradation": {"kind": "identity", "boundary": "replicate",
                            "kernel_size": 3, "kernel_sigma": 0.5},
            "sigma255": 15.0,
            "seed": 7,
        })
        assert resp.status_code == 200
        out = _img(resp.json()["image"])
        ref, _ = add_awgn(img, 15.0, 7)
        assert out.data.tobytes() == ref.data.tobytes()
        assert resp.json()["noise_sigma"] == pytest.approx(15.0 / 255.0)

    def test_blur(self, client):
        img = make_phantom()
        resp = client.post("/degrade", json={
            "image": _b64(img),
            "degradation": {"kind": "blur", "boundary": "replicate",
                            "kernel_size": 5, "kernel_sigma": 1.0},
            "sigma255": 0.0,
            "seed": 0,
        })
        assert resp.status_code == 200
        out = _img(resp.json()["image"])
        assert np.any(out.data != img.data)

    def test_bad_kernel_is_400(self, client):
        img = make_phantom()
        resp = client.post("/degrade", json={
            "image": _b64(img),
            "degradation": {"kind": "blur", "boundary": "replicate",
                            "kernel_size": 4, "kernel_sigma": 1.0},
            "sigma255": 0.0,
            "seed": 0,
        })
        assert resp.status_code == 400


class TestInferEndpoint:
    def test_zero_bundle_identity(self, client, tmp_path, rng):
        g = build_default_graph("sr", depth=2, res_counts=(1, 1))
        path = tmp_path / "zero.dwb"
        save_bundle(g, str(path))
        img = Image(rng.uniform(0, 1, (16, 16)).astype(np.float32))
        resp = client.post("/infer", json={"image": _b64(img), "bundle_path": str(path)})
        assert resp.status_code == 200
        out = _img(resp.json()["image"])
        assert out.data.tobytes() == img.data.tobytes()

    def test_inline_bundle(self, client, tmp_path, rng):
        g = build_default_graph("denoise", depth=1, res_counts=(1,))
        path = tmp_path / "zero.dwb"
        save_bundle(g, str(path))
        img = Image(rng.uniform(0, 1, (8, 8)).astype(np.float32))
        b64 = base64.b64encode(path.read_bytes()).decode()
        resp = client.post("/infer", json={"image": _b64(img), "bundle_b64": b64})
        assert resp.status_code == 200

    def test_missing_bundle_is_400(self, client, rng):
        img = Image(rng.uniform(0, 1, (8, 8)).astype(np.float32))
        resp = client.post("/infer", json={"image": _b64(img)})
        assert resp.status_code == 400
        assert "infer" in resp.json()["detail"]

    def test_indivisible_input_is_400(self, client, tmp_path):
        g = build_default_graph("sr", depth=3, res_counts=(1, 1, 1))
        path = tmp_path / "d3.dwb"
        save_bundle(g, str(path))
        img = Image(np.zeros((20, 20), dtype=np.float32))
        resp = client.post("/infer", json={"image": _b64(img), "bundle_path": str(path)})
        assert resp.status_code == 400


class TestRestoreEndpoint:
    def test_denoise_improves_psnr(self, client):
        resp = client.post("/restore", json=_restore_payload())
        assert resp.status_code == 200
        body = resp.json()
        assert body["task"] == "denoise"
        assert body["prior"] == "gaussian_smooth(0.8)"
        assert len(body["results"]) == 1
        res = body["results"][0]
        assert res["k_used"] == 8
        assert res["psnr"] > 24.72  # input PSNR for this noise draw
        assert res["trace_csv"].startswith("iter,rel_change,data_fidelity")
        assert body["summary_csv"].startswith("task,prior,K_used")

    def test_sweep_returns_all_combos(self, client):
        payload = _restore_payload()
        payload["iterate"]["epsilon"] = [0.005, 0.01]
        payload["iterate"]["step"] = [0.25, 0.5]
        resp = client.post("/restore", json=payload)
        body = resp.json()
        assert len(body["results"]) == 4
        tags = [r["tag"] for r in body["results"]]
        assert len(set(tags)) == 4
        assert len(body["summary_csv"].strip().split("\n")) == 5

    def test_no_reference_omits_metrics(self, client):
        payload = _restore_payload(reference_image=None)
        resp = client.post("/restore", json=payload)
        res = resp.json()["results"][0]
        assert res["rmse"] is None and res["psnr"] is None and res["ssim"] is None

    def test_identity_prior_network_none(self, client, tmp_path):
        g = build_default_graph("denoise", depth=2, res_counts=(1, 1))
        path = tmp_path / "z.dwb"
        save_bundle(g, str(path))
        payload = _restore_payload(prior={"kind": "network", "sigma": 1.0,
                                          "bundle_path": str(path)})
        resp = client.post("/restore", json=payload)
        assert resp.status_code == 200

    def test_sweep_cap_is_400(self, client):
        payload = _restore_payload()
        payload["iterate"]["step"] = [i / 100 + 0.01 for i in range(9)]
        payload["iterate"]["epsilon"] = [i / 1000 + 0.001 for i in range(9)]
        resp = client.post("/restore", json=payload)
        assert resp.status_code == 400
        assert "restore" in resp.json()["detail"]

    def test_bad_iterate_params_400(self, client):
        payload = _restore_payload()
        payload["iterate"]["mu"] = -1.0
        resp = client.post("/restore", json=payload)
        assert resp.status_code == 400

    def test_shape_mismatch_400(self, client):
        payload = _restore_payload()
        payload["reference_image"] = _b64(Image(np.zeros((32, 32), dtype=np.float32)))
        resp = client.post("/restore", json=payload)
        assert resp.status_code == 400
