import pytest

import itarray


def small_images(seed=3):
    return itarray.generate_images(seed=seed, nx=16, ny=16, nt=8, sources=3)


def test_generate_is_deterministic():
    a, b = small_images(), small_images()
    assert len(a) == 16 * 16 * 8
    assert a.hash() == b.hash()
    assert [d[0] for d in a.dims] == ["x", "y", "t"]
    assert a.attrs == ["d"]


def test_round_trip_text(tmp_path):
    a = small_images()
    b = itarray.loads(a.dump())
    assert itarray.diff_count(a, b) == 0
    path = tmp_path / "img.txt"
    itarray.save(str(path), a)
    assert itarray.load(str(path)).hash() == a.hash()


def test_sigmaclip_strategies_agree():
    images = small_images()
    finals = []
    for s in ["naive", "manual-incr", "efficient-incr", "efficient-incr+storage"]:
        final, trace = itarray.sigmaclip(images, k=1.5, strategy=s)
        assert trace[-1]["changed_cells"] == 0
        finals.append(final.hash())
    assert len(set(finals)) == 1


def test_sourcedetect_policies_and_multires_agree():
    labels = itarray.detection_labels(small_images(), threshold_sigmas=3.0).rechunk([8, 8])
    ref, _ = itarray.sourcedetect(labels)
    for pol in ["t1", "t5", "converge"]:
        out, traces = itarray.sourcedetect(labels, policy=pol, workers=2)
        assert out.hash() == ref.hash()
        assert len(traces) == 1
    mr, traces = itarray.sourcedetect(labels, levels=2)
    assert mr.hash() == ref.hash()
    assert len(traces) == 2


def test_kmeans_labels_every_point():
    pts = itarray.detection_labels(small_images(), threshold_sigmas=3.0)
    out, traces = itarray.kmeans(pts, clusters=2)
    assert len(out) == len(pts)
    assert traces[0][-1]["changed_cells"] == 0


def test_bench_and_errors():
    rep = itarray.bench("sigmaclip", nx=8, ny=8, nt=8, k=1.5)
    assert rep["agree"]
    assert rep["csv"].startswith("app,strategy,policy")
    with pytest.raises(itarray.ItarrayError):
        itarray.sigmaclip(small_images(), strategy="bogus")
