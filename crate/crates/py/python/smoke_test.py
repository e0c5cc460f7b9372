"""Smoke test for the triprec_py extension module."""

import math
import os
import tempfile

import triprec_py as tr

DATA = os.path.join(os.path.dirname(__file__), "..", "..", "..", "data")


def main():
    tiny = tr.Corpus.from_csv(
        os.path.join(DATA, "tiny", "checkins.csv"),
        os.path.join(DATA, "tiny", "pois.csv"),
    )
    assert tiny.stats() == {"users": 2, "poi_visits": 9, "trips": 4, "pois_per_trip": 2.25}, tiny.stats()

    corpus = tr.Corpus.synthetic(42)
    model = tr.Model.train(corpus, settings={"epochs": 20})
    assert model.dim == 13
    pois = model.poi_ids()
    assert math.isfinite(model.csim(pois[0], pois[1]))
    p = model.prob(pois[0], pois[1:3], model.user_ids()[0])
    assert 0.0 < p < 1.0

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.model")
        model.save(path)
        again = tr.Model.load(path)
        assert again.poi_vector(pois[0]) == model.poi_vector(pois[0])
        cpath = os.path.join(d, "c.json")
        corpus.save(cpath)
        assert tr.Corpus.load(cpath).trips() == corpus.trips()

    user, trip = next((u, t) for u, t in corpus.trips() if len(set(t)) >= 3)
    rec = tr.recommend(model, corpus, user, trip[0], trip[-1], 6 * 3600.0, solver="alns")
    assert rec["trip"][0] == trip[0] and rec["trip"][-1] == trip[-1]
    assert rec["total_cost"] <= 6 * 3600.0 * (1 + 1e-9)
    exact = tr.recommend(model, corpus, user, trip[0], trip[-1], 6 * 3600.0, solver="exact")
    assert exact["ctq_score"] >= rec["ctq_score"] - 1e-9

    try:
        tr.recommend(model, corpus, user, trip[0], trip[-1], 1.0)
    except tr.NoFeasibleTrip:
        pass
    else:
        raise AssertionError("expected NoFeasibleTrip")

    m = tr.metrics(["a", "b", "c"], ["a", "b", "c"])
    assert m["f1"] == 1.0 and m["f1_star"] == 1.0

    summary = tr.evaluate(corpus, solvers=["random", "pop"])
    assert [s["solver"] for s in summary] == ["random", "pop"]
    print("smoke test ok:", rec["trip"], round(rec["ctq_score"], 4))


if __name__ == "__main__":
    main()
