import os
import threading

import numpy as np
import pytest
import requests

from glint.serve import build_server


@pytest.fixture(scope="module")
def server(tiny_run):
    ckpt = os.path.join(tiny_run, "checkpoints", "ckpt_20.bin")
    srv = build_server(ckpt, "MirrorRoom", port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base
    srv.shutdown()


@pytest.fixture(scope="module")
def loading_server(tiny_run):
    ckpt = os.path.join(tiny_run, "checkpoints", "ckpt_20.bin")
    srv = build_server(ckpt, "MirrorRoom", port=0, defer_load=True)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{srv.server_address[1]}"
    yield base
    srv.shutdown()


def render_req(**kw):
    doc = {"vector": [0.5, 0.6], "camera": [0, 1, -0.5, 0, 1, 1],
           "resolution": 24, "mode": "net"}
    doc.update(kw)
    return doc


class TestSpace:
    def test_space_document(self, server):
        r = requests.get(server + "/space")
        assert r.status_code == 200
        doc = r.json()
        assert doc["dim"] == 2
        assert [p["name"] for p in doc["params"]] == ["ball_x", "ball_z"]
        assert doc["params"][0]["min"] == -0.8
        assert doc["camera"]["mode"] == "fixed"
        assert doc["checkpoint_info"]["scene_dim"] == 2

    def test_stable_across_calls(self, server):
        a = requests.get(server + "/space").json()
        b = requests.get(server + "/space").json()
        assert a == b

    def test_cors_headers(self, server):
        r = requests.get(server + "/space")
        assert r.headers["Access-Control-Allow-Origin"] == "*"
        ro = requests.options(server + "/render")
        assert ro.status_code == 204


class TestHealthz:
    def test_ok(self, server):
        r = requests.get(server + "/healthz")
        assert r.status_code == 200 and r.text == "ok"


class TestRender:
    def test_net_mode_byte_identical(self, server):
        a = requests.post(server + "/render", json=render_req())
        b = requests.post(server + "/render", json=render_req())
        assert a.status_code == 200
        assert a.headers["Content-Type"] == "image/png"
        assert a.content == b.content
        assert a.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_pt_mode(self, server):
        r = requests.post(server + "/render",
                          json=render_req(mode="pt", spp=4, resolution=16))
        assert r.status_code == 200
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_vector_length_mismatch_400(self, server):
        r = requests.post(server + "/render", json=render_req(vector=[0.5]))
        assert r.status_code == 400
        doc = r.json()
        assert doc["field"] == "vector"

    def test_out_of_range_vector_400(self, server):
        r = requests.post(server + "/render", json=render_req(vector=[0.5, 1.4]))
        assert r.status_code == 400

    def test_resolution_bounds_400(self, server):
        assert requests.post(server + "/render",
                             json=render_req(resolution=8)).status_code == 400
        assert requests.post(server + "/render",
                             json=render_req(resolution=2048)).status_code == 400

    def test_pt_spp_cap_400(self, server):
        r = requests.post(server + "/render", json=render_req(mode="pt", spp=512))
        assert r.status_code == 400
        assert r.json()["field"] == "spp"

    def test_bad_mode_400(self, server):
        r = requests.post(server + "/render", json=render_req(mode="bdpt"))
        assert r.status_code == 400

    def test_503_while_loading(self, loading_server):
        r = requests.post(loading_server + "/render", json=render_req())
        assert r.status_code == 503


class TestDebugNormalize:
    def test_round_trip_precision(self, server):
        raw = [0.123456789, -0.7]
        r = requests.post(server + "/debug/normalize", json={"raw": raw})
        assert r.status_code == 200
        doc = r.json()
        norm = np.array(doc["normalized"])
        assert np.all((norm >= 0) & (norm <= 1))
        assert np.allclose(doc["denormalized"], raw, atol=1e-9)
        # explicit formula: (raw - min) / (max - min) over [-0.8, 0.8]
        assert norm[0] == pytest.approx((0.123456789 + 0.8) / 1.6, abs=1e-12)

    def test_bad_raw_400(self, server):
        r = requests.post(server + "/debug/normalize", json={"raw": [1, 2, 3]})
        assert r.status_code == 400
