"""Classifier construction and checkpointing."""

import numpy as np
import pytest

from gradsynth.autodiff import Tensor
from gradsynth.errors import ContainerError, ShapeError
from gradsynth.models import Classifier, ClassifierSpec, build, checkpoint


def _tiny_spec():
    return ClassifierSpec(in_shape=(3, 8, 8), num_classes=4, widths=(8, 16), depths=(1, 1))


def test_spec_dict_roundtrip():
    spec = _tiny_spec()
    assert ClassifierSpec.from_dict(spec.to_dict()) == spec


def test_spec_validation():
    with pytest.raises(ShapeError):
        ClassifierSpec(in_shape=(3, 8, 8), num_classes=0, widths=(8,), depths=(1,))
    with pytest.raises(ShapeError):
        ClassifierSpec(in_shape=(3, 8, 8), num_classes=4, widths=(8, 16), depths=(1,))


def test_build_seed_determinism():
    a = build(_tiny_spec(), seed=3)
    b = build(_tiny_spec(), seed=3)
    c = build(_tiny_spec(), seed=4)
    for name in a.params:
        assert a.params[name].data.tobytes() == b.params[name].data.tobytes()
    assert any(a.params[n].data.tobytes() != c.params[n].data.tobytes() for n in a.params)


def test_logits_shape_and_predict(rng):
    model = build(_tiny_spec(), seed=0)
    x = rng.uniform(size=(5, 3, 8, 8)).astype(np.float32)
    z = model.logits(Tensor(x))
    assert z.data.shape == (5, 4)
    pred = model.predict(x)
    np.testing.assert_array_equal(pred, z.data.argmax(axis=1))


def test_checkpoint_roundtrip_bit_exact(tmp_path, rng):
    model = build(_tiny_spec(), seed=7)
    model.meta = {"epochs": 2}
    path = tmp_path / "m.gsyn"
    checkpoint.save(model, path)
    back = checkpoint.load(path)
    assert back.spec == model.spec
    assert back.meta == {"epochs": 2}
    for name in model.params:
        assert back.params[name].data.tobytes() == model.params[name].data.tobytes()
    for name in model.buffers:
        assert back.buffers[name].tobytes() == model.buffers[name].tobytes()
    x = rng.uniform(size=(2, 3, 8, 8)).astype(np.float32)
    model.freeze()
    back.freeze()
    assert back.logits(Tensor(x)).data.tobytes() == model.logits(Tensor(x)).data.tobytes()


def test_checkpoint_rejects_missing_tensor(tmp_path):
    model = build(_tiny_spec(), seed=0)
    path = tmp_path / "m.gsyn"
    checkpoint.save(model, path)
    from gradsynth.models import read_container, write_container

    kind, meta, tensors = read_container(path)
    name = sorted(tensors)[0]
    tensors.pop(name)
    write_container(path, kind, meta, tensors)
    with pytest.raises(ContainerError):
        checkpoint.load(path)


def test_freeze_blocks_param_grads(rng):
    import gradsynth.autodiff as ad

    model = build(_tiny_spec(), seed=0)
    model.freeze()
    x = Tensor(rng.uniform(size=(1, 3, 8, 8)).astype(np.float32), requires_grad=True)
    loss = ad.ops.sum_all(model.logits(x))
    ad.backward(loss)
    assert x.grad is not None
    assert all(p.grad is None for p in model.params.values())
