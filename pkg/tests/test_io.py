import json

import numpy as np
import pytest
from PIL import Image

from salseg import io as sio
from salseg.masks import IGNORE_LABEL, DomainError, LabelMask, SaliencyMap
from salseg.ranking import semantic_rank


def _save(arr, path, mode, palette=False):
    img = Image.fromarray(np.asarray(arr, dtype=np.uint8), mode=mode)
    if palette:
        img.putpalette(sio.voc_palette())
    img.save(path)


def test_voc_palette_known_colours():
    pal = sio.voc_palette()
    assert pal[3:6] == [128, 0, 0]      # aeroplane
    assert pal[15 * 3:16 * 3] == [192, 128, 128]  # person
    assert pal[255 * 3:256 * 3] == [224, 224, 192]  # void


def test_load_semantic_background(tmp_path):
    _save(np.zeros((4, 5)), tmp_path / "m.png", "P", palette=True)
    m = sio.load_semantic_mask(tmp_path / "m.png")
    assert m.shape == (4, 5) and m.present() == []


def test_load_semantic_person_and_void(tmp_path):
    arr = np.array([[0, 15], [255, 15]])
    _save(arr, tmp_path / "m.png", "P", palette=True)
    m = sio.load_semantic_mask(tmp_path / "m.png")
    assert m.present() == [15]
    assert m.labels[1, 0] == IGNORE_LABEL


def test_load_semantic_gray_fallback(tmp_path):
    _save([[0, 3]], tmp_path / "g.png", "L")
    assert sio.load_semantic_mask(tmp_path / "g.png").present() == [3]


def test_load_semantic_unknown_index(tmp_path):
    _save([[0, 40, 41]], tmp_path / "m.png", "P", palette=True)
    with pytest.raises(DomainError, match=r"\[40, 41\]"):
        sio.load_semantic_mask(tmp_path / "m.png")


def test_truncated_file_is_io_error(tmp_path):
    _save(np.zeros((32, 32)), tmp_path / "m.png", "P", palette=True)
    data = (tmp_path / "m.png").read_bytes()
    (tmp_path / "t.png").write_bytes(data[: len(data) // 2])
    with pytest.raises(OSError):
        sio.load_semantic_mask(tmp_path / "t.png")


def test_load_saliency(tmp_path):
    _save(np.full((2, 2), 255), tmp_path / "a.png", "L")
    _save(np.zeros((2, 2)), tmp_path / "b.png", "L")
    _save([[128]], tmp_path / "c.png", "L")
    assert (sio.load_saliency_map(tmp_path / "a.png").values == 1.0).all()
    assert (sio.load_saliency_map(tmp_path / "b.png").values == 0.0).all()
    assert sio.load_saliency_map(tmp_path / "c.png").values[0, 0] == pytest.approx(0.50196, abs=1e-5)


def test_load_saliency_rejects_rgb(tmp_path):
    Image.new("RGB", (2, 2)).save(tmp_path / "rgb.png")
    with pytest.raises(DomainError):
        sio.load_saliency_map(tmp_path / "rgb.png")


def test_binarize_strict():
    s = SaliencyMap([[0.4, 0.5, 0.6]])
    assert sio.binarize(s).bits.tolist() == [[False, False, True]]
    assert sio.binarize(s, 0.0).bits.all()
    assert not sio.binarize(SaliencyMap([[1.0, 0.2]]), 1.0).bits.any()
    with pytest.raises(DomainError):
        sio.binarize(s, 1.5)


def test_round_trips(tmp_path):
    rng = np.random.default_rng(0)
    m = LabelMask(rng.integers(0, 21, (9, 7)), 20)
    sio.save_semantic_mask(m, tmp_path / "m.png")
    assert sio.load_semantic_mask(tmp_path / "m.png") == m
    s = SaliencyMap(rng.integers(0, 256, (9, 7)) / 255.0)
    sio.save_saliency_map(s, tmp_path / "s.png")
    assert sio.load_saliency_map(tmp_path / "s.png") == s


def test_manifest_round_trip_and_missing(tmp_path):
    m = sio.write_synthetic_dataset(tmp_path / "d", 4, seed=1)
    loaded = sio.load_manifest(tmp_path / "d" / "manifest.json")
    assert [r.id for r in loaded.records] == [r.id for r in m.records]
    (tmp_path / "d" / "img002_sal.png").unlink()
    with pytest.raises(OSError, match="img002"):
        sio.load_manifest(tmp_path / "d" / "manifest.json")


def test_duplicate_ids():
    with pytest.raises(DomainError):
        sio.DatasetManifest([sio.ManifestRecord("a"), sio.ManifestRecord("a")])


def test_random_split_is_seeded():
    m = sio.DatasetManifest([sio.ManifestRecord(f"i{i}") for i in range(850)])
    a, b = sio.random_split(m, 425, seed=3), sio.random_split(m, 425, seed=3)
    assert a.to_json() == b.to_json() and a.split_seed == 3
    assert len(a.split("train").records) == 425 and len(a.split("test").records) == 425


def test_synthetic_two_regions():
    spec = sio.SyntheticSceneSpec(8, 8, (sio.Region(3, (0, 0, 4, 4), 0.9), sio.Region(5, (4, 4, 4, 4), 0.6)))
    sem, sal, t = sio.generate_synthetic(spec)
    assert [(e.category, e.rank_position, e.coverage) for e in t.entries] == [(3, 1, 1.0), (5, 2, 1.0)]
    assert semantic_rank(sem, sal) == t


def test_synthetic_empty_and_errors():
    _, _, t = sio.generate_synthetic(sio.SyntheticSceneSpec(4, 4))
    assert t.entries == ()
    with pytest.raises(DomainError):
        sio.SyntheticSceneSpec(8, 8, (sio.Region(1, (0, 0, 4, 4), 0.5), sio.Region(2, (2, 2, 4, 4), 0.4)))
    with pytest.raises(DomainError):
        sio.SyntheticSceneSpec(8, 8, (sio.Region(1, (0, 0, 2, 2), 0.5), sio.Region(2, (4, 4, 2, 2), 0.5)))


def test_partial_coverage_region_absent():
    spec = sio.SyntheticSceneSpec(10, 10, (sio.Region(1, (0, 0, 5, 5), 0.9, coverage=0.4),
                                           sio.Region(2, (5, 5, 5, 5), 0.3)))
    sem, sal, t = sio.generate_synthetic(spec, tau=0.5)
    assert t.by_category()[1].rank_position is None
    assert semantic_rank(sem, sal) == t


def test_config_parsing():
    kv = sio.parse_config("variant = v3  # refined\n\nlr=0.05\n")
    assert kv == {"variant": "v3", "lr": "0.05"}
    with pytest.raises(DomainError):
        sio.parse_config("nonsense")


def test_checkpoint_round_trip(tmp_path):
    params = {"a.weight": np.arange(6.0).reshape(1, 2, 3, 1), "a.bias": np.array([0.5])}
    sio.save_checkpoint(params, tmp_path / "p.bin", {"variant": "v2"})
    loaded, meta = sio.load_checkpoint(tmp_path / "p.bin")
    assert meta == {"variant": "v2"}
    for k in params:
        assert np.array_equal(loaded[k], params[k])
    manifest = json.loads((tmp_path / "p.bin.json").read_text())
    assert manifest["params"][1]["offset"] == 6


def test_training_scene():
    x, sem, sal = sio.synthetic_training_scene(32, 3, seed=0)
    assert x.shape == (3, 32, 32) and sem.present() == [1, 2, 3] and sal.bits.any()
