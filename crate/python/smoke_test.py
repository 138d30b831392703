"""Smoke test for the sdoh_eventkit extension module.

Build and install first:  pip install ./crates/python
"""
import tempfile

import sdoh_eventkit as sk


def main():
    corpus = sk.Corpus.synthetic(60, seed=3)
    assert len(corpus) == 60
    doc, gold = corpus[0]
    assert doc.text and len(gold) >= 0

    ann = gold.to_standoff(doc)
    again = sk.Annotations.from_standoff(doc, ann)
    assert again.to_standoff(doc) == ann

    identity = sk.score(corpus.annotations(), corpus.annotations())
    assert identity["overall"]["f1"] == 1.0, identity["overall"]

    train, test = corpus.slice(0, 45), corpus.slice(45, 60)
    model = sk.Model.train(train, {"epochs": 15})
    preds = model.predict_corpus(test)
    report = sk.score(test.annotations(), preds)
    print("held-out overall f1: %.3f" % report["overall"]["f1"])

    with tempfile.TemporaryDirectory() as tmp:
        model.save(tmp + "/model.ckpt")
        loaded = sk.Model.load(tmp + "/model.ckpt")
        d0 = test.documents()[0]
        assert loaded.predict(d0).to_standoff(d0) == preds[0].to_standoff(d0)
        corpus.write(tmp + "/corpus")
        assert len(sk.Corpus.read(tmp + "/corpus")) == 60

    print(gold.note_labels())
    print(sk.tokenize("Smokes 1 ppd.")[:3])
    print(sk.extract_social_history("HPI: cough\nSocial History: quit smoking 2010\nPLAN: none"))
    cmp = sk.compare_indicators([("p1", "tobacco_current")], [("p1", "tobacco_current"), ("p2", "tobacco_current")])
    print(cmp["rows"][1] if len(cmp["rows"]) > 1 else cmp["rows"])
    print("sdoh_eventkit", sk.__version__, "ok")


if __name__ == "__main__":
    main()
