import numpy as np
import pytest

from glint import scene as S


@pytest.fixture(scope="session")
def mirror_space():
    return S.builtin("MirrorRoom")[0]


@pytest.fixture(scope="session")
def cornell_space():
    return S.builtin("CornellVar")[0]


@pytest.fixture(scope="session")
def caustic_space():
    return S.builtin("CausticBox")[0]


@pytest.fixture(scope="session")
def mirror_instance(mirror_space):
    v = S.normalize(mirror_space, [0.0, 0.4])
    cam = np.array(mirror_space.camera.position + mirror_space.camera.lookat)
    return S.instantiate(mirror_space, v, cam)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """Short MirrorRoom training run shared by CLI/serve tests."""
    from glint.train import Schedule, TrainConfig, train_run

    out = str(tmp_path_factory.mktemp("tinyrun"))
    cfg = TrainConfig(
        scene="MirrorRoom", iterations=20, out_dir=out, batch_chains=4,
        patch_size=8, schedule=Schedule(r0=32, increment=4, period=8, r_max=40),
        spp=4, seed=3, val_interval=10, val_frames=2, val_res=16, val_spp=8,
        warmup_generate=6, checkpoint_interval=10)
    train_run(cfg)
    return out
