"""Dataset construction: tokenizer, SNLI parsing, splitting, stats, file IO."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visent.dataset import (
    DatasetStats,
    SNLIRecord,
    SplitSpec,
    VEExample,
    build_snli_ve,
    build_vocabulary,
    compute_stats,
    derive_image_id,
    example_from_snli,
    parse_snli,
    partition_by_image,
    read_examples,
    tokenize,
    write_examples,
)
from visent.errors import (
    EmptyHypothesisError,
    FormatError,
    ProvenanceError,
    SplitSpecError,
    ValidationError,
)
from visent.models import Label


def snli_line(premise="Some people.", hypothesis="A person exists.",
              label="entailment", caption="123.jpg#0", pair="123.jpg#0r1e"):
    return json.dumps({
        "sentence1": premise,
        "sentence2": hypothesis,
        "gold_label": label,
        "captionID": caption,
        "pairID": pair,
    })


def ve(image="1.jpg", text="a cat sits", label=Label.ENTAILMENT, pair="p1",
       **extra):
    return VEExample(image_id=image, hypothesis_raw=text, label=label,
                     pair_id=pair, extra=extra)


class TestTokenize:
    def test_lowercase_and_whitespace(self):
        assert tokenize("The Dog  Runs") == ("the", "dog", "runs")

    def test_leading_trailing_punctuation_detached(self):
        assert tokenize("Hello, world!") == ("hello", ",", "world", "!")

    def test_punctuation_runs_become_single_tokens(self):
        assert tokenize('"Wow!!"') == ('"', "wow", "!", "!", '"')

    def test_interior_punctuation_stays_attached(self):
        assert tokenize("it's a long-haired dog") == (
            "it's", "a", "long-haired", "dog")

    def test_pure_punctuation_token(self):
        assert tokenize("-") == ("-",)

    def test_empty_and_blank(self):
        assert tokenize("") == ()
        assert tokenize("   \t\n ") == ()


class TestParseSNLI:
    def test_empty_stream(self):
        assert parse_snli([]) == []

    def test_well_formed_line(self):
        records = parse_snli([snli_line()])
        assert len(records) == 1
        rec = records[0]
        assert rec.premise_text == "Some people."
        assert rec.hypothesis_text == "A person exists."
        assert rec.gold_label == "entailment"
        assert rec.caption_id == "123.jpg#0"
        assert rec.pair_id == "123.jpg#0r1e"
        assert not rec.skip

    def test_no_consensus_label_flagged_skip(self):
        records = parse_snli([snli_line(label="-")])
        assert records[0].skip

    def test_blank_lines_ignored(self):
        records = parse_snli(["", snli_line(), "   "])
        assert len(records) == 1

    def test_malformed_line_collected_with_line_number(self):
        issues = []
        records = parse_snli([snli_line(), "not json", snli_line()],
                             issues=issues)
        assert len(records) == 2
        assert len(issues) == 1
        assert issues[0].startswith("line 2:")

    def test_missing_field_collected(self):
        bad = json.dumps({"sentence1": "x"})
        issues = []
        parse_snli([bad], issues=issues)
        assert "sentence2" in issues[0] or "gold_label" in issues[0]

    def test_invalid_gold_label_collected(self):
        issues = []
        parse_snli([snli_line(label="perhaps")], issues=issues)
        assert len(issues) == 1

    def test_strict_mode_raises(self):
        with pytest.raises(FormatError, match="line 1"):
            parse_snli(["{broken"], strict=True)


class TestDeriveImageId:
    def test_strips_caption_suffix(self):
        rec = parse_snli([snli_line(caption="3416050480.jpg#4")])[0]
        assert derive_image_id(rec) == "3416050480.jpg"

    def test_minimal_case(self):
        rec = parse_snli([snli_line(caption="1.jpg#0")])[0]
        assert derive_image_id(rec) == "1.jpg"

    @pytest.mark.parametrize("caption", ["garbage", "123.jpg", "x.jpg#1",
                                         "12.png#0", ".jpg#0"])
    def test_bad_caption_raises_with_pair_id(self, caption):
        rec = SNLIRecord(premise_text="p", hypothesis_text="h",
                         gold_label="entailment", caption_id=caption,
                         pair_id="pairX")
        with pytest.raises(ProvenanceError, match="pairX"):
            derive_image_id(rec)


class TestVEExample:
    def test_hypothesis_tokenized_from_raw(self):
        ex = ve(text="A dog runs!")
        assert ex.hypothesis == ("a", "dog", "runs", "!")

    def test_bad_image_id_rejected(self):
        with pytest.raises(ValidationError):
            ve(image="notanimage")
        with pytest.raises(ValidationError):
            ve(image="12.jpeg")

    def test_empty_hypothesis_rejected(self):
        with pytest.raises(EmptyHypothesisError):
            ve(text="   ")

    def test_integer_label_coerced(self):
        assert ve(label=2).label is Label.ENTAILMENT

    def test_conversion_from_snli(self):
        rec = parse_snli([snli_line(label="contradiction")])[0]
        ex = example_from_snli(rec)
        assert ex.image_id == "123.jpg"
        assert ex.label is Label.CONTRADICTION
        assert ex.pair_id == "123.jpg#0r1e"

    def test_skip_record_refused(self):
        rec = parse_snli([snli_line(label="-")])[0]
        with pytest.raises(ValidationError):
            example_from_snli(rec)


class TestSplitSpec:
    def test_disjoint_sets_accepted(self):
        spec = SplitSpec(train={"1.jpg"}, val={"2.jpg"}, test={"3.jpg"})
        assert "1.jpg" in spec.train

    def test_overlap_rejected(self):
        with pytest.raises(SplitSpecError, match="train/val"):
            SplitSpec(train={"1.jpg"}, val={"1.jpg"}, test={"3.jpg"})

    def test_empty_set_rejected(self):
        with pytest.raises(SplitSpecError, match="test"):
            SplitSpec(train={"1.jpg"}, val={"2.jpg"}, test=set())

    def test_from_files(self, tmp_path):
        for name, ids in (("tr", ["1.jpg", "2.jpg"]), ("va", ["3.jpg"]),
                          ("te", ["4.jpg"])):
            (tmp_path / name).write_text("\n".join(ids) + "\n",
                                         encoding="utf-8")
        spec = SplitSpec.from_files(tmp_path / "tr", tmp_path / "va",
                                    tmp_path / "te")
        assert spec.train == {"1.jpg", "2.jpg"}
        assert spec.val == {"3.jpg"}
        assert spec.test == {"4.jpg"}


class TestPartition:
    def spec(self):
        return SplitSpec(train={"1.jpg", "2.jpg"}, val={"3.jpg"},
                         test={"4.jpg"})

    def test_examples_follow_their_image(self):
        examples = [ve(image="1.jpg", pair="a"), ve(image="3.jpg", pair="b"),
                    ve(image="1.jpg", pair="c"), ve(image="4.jpg", pair="d")]
        train, val, test = partition_by_image(examples, self.spec())
        assert [e.pair_id for e in train] == ["a", "c"]
        assert [e.pair_id for e in val] == ["b"]
        assert [e.pair_id for e in test] == ["d"]

    def test_empty_input(self):
        train, val, test = partition_by_image([], self.spec())
        assert train == [] and val == [] and test == []

    def test_unrouted_images_dropped_and_reported(self):
        issues = []
        examples = [ve(image="9.jpg", pair="z"), ve(image="2.jpg", pair="y")]
        train, val, test = partition_by_image(examples, self.spec(),
                                              issues=issues)
        assert len(train) == 1
        assert len(issues) == 1
        assert "9.jpg" in issues[0] and "z" in issues[0]

    def test_output_order_independent_of_input_order(self):
        examples = [ve(image="2.jpg", pair="b"), ve(image="1.jpg", pair="d"),
                    ve(image="2.jpg", pair="a"), ve(image="1.jpg", pair="c")]
        a, _, _ = partition_by_image(examples, self.spec())
        b, _, _ = partition_by_image(list(reversed(examples)), self.spec())
        assert a == b
        assert [(e.image_id, e.pair_id) for e in a] == [
            ("1.jpg", "c"), ("1.jpg", "d"), ("2.jpg", "a"), ("2.jpg", "b")]


class TestStats:
    def test_empty_split(self):
        stats = compute_stats([])
        assert stats.images == 0
        assert stats.total == 0
        assert stats.vocabulary == 0
        assert not stats.imbalanced

    def test_counts_oracle(self):
        examples = [
            ve(image="1.jpg", text="a cat", label=Label.ENTAILMENT, pair="a"),
            ve(image="1.jpg", text="a dog", label=Label.NEUTRAL, pair="b"),
            ve(image="2.jpg", text="no cat here",
               label=Label.CONTRADICTION, pair="c"),
            ve(image="2.jpg", text="a cat", label=Label.ENTAILMENT, pair="d"),
        ]
        stats = compute_stats(examples)
        assert stats.images == 2
        assert stats.entailment == 2
        assert stats.neutral == 1
        assert stats.contradiction == 1
        assert stats.total == 4
        # distinct tokens: a, cat, dog, no, here
        assert stats.vocabulary == 5

    def test_imbalance_flag_above_one_percent(self):
        assert DatasetStats(images=1, contradiction=100, neutral=100,
                            entailment=102, vocabulary=1).imbalanced
        assert not DatasetStats(images=1, contradiction=100, neutral=100,
                                entailment=101, vocabulary=1).imbalanced
        assert DatasetStats(images=1, contradiction=0, neutral=1,
                            entailment=0, vocabulary=1).imbalanced

    def test_to_dict_shape(self):
        d = compute_stats([ve()]).to_dict()
        assert d["examples"]["total"] == 1
        assert d["tokenizer_version"] == "v1"
        assert "imbalanced" in d

    def test_vocabulary_is_sorted_and_distinct(self):
        examples = [ve(text="b a", pair="x"), ve(text="a c", pair="y")]
        assert build_vocabulary(examples) == ["a", "b", "c"]


class TestDatasetIO:
    def test_roundtrip_is_identity(self, tmp_path):
        examples = [
            ve(image="1.jpg", text="A cat!", label=Label.ENTAILMENT, pair="a"),
            ve(image="2.jpg", text="two dogs", label=Label.NEUTRAL, pair="b"),
            ve(image="3.jpg", text="it's empty",
               label=Label.CONTRADICTION, pair="c"),
        ]
        path = tmp_path / "data.jsonl"
        write_examples(examples, path)
        assert read_examples(path) == examples

    def test_empty_roundtrip(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        write_examples([], path)
        assert read_examples(path) == []
        first = path.read_text(encoding="utf-8").splitlines()[0]
        meta = json.loads(first)
        assert meta["format"] == "snli-ve-jsonl"

    def test_unknown_fields_preserved(self, tmp_path):
        examples = [ve(pair="a", annotator="w123", score=0.5)]
        path = tmp_path / "data.jsonl"
        write_examples(examples, path)
        back = read_examples(path)
        assert back[0].extra == {"annotator": "w123", "score": 0.5}
        assert back == examples

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"format": "csv", "version": 1}) + "\n",
                        encoding="utf-8")
        with pytest.raises(FormatError, match="line 1"):
            read_examples(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            json.dumps({"format": "snli-ve-jsonl", "version": 99}) + "\n",
            encoding="utf-8")
        with pytest.raises(FormatError, match="version"):
            read_examples(path)

    def test_missing_field_reported_with_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rows = [json.dumps({"format": "snli-ve-jsonl", "version": 1}),
                json.dumps({"pair_id": "a", "image_id": "1.jpg",
                            "label": "neutral"})]
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        with pytest.raises(FormatError, match="line 2"):
            read_examples(path)

    def test_unknown_label_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rows = [json.dumps({"format": "snli-ve-jsonl", "version": 1}),
                json.dumps({"pair_id": "a", "image_id": "1.jpg",
                            "hypothesis": "a cat", "label": "maybe"})]
        path.write_text("\n".join(rows) + "\n", encoding="utf-8")
        with pytest.raises(FormatError, match="line 2"):
            read_examples(path)

    def test_non_json_line_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("not json\n", encoding="utf-8")
        with pytest.raises(FormatError, match="line 1"):
            read_examples(path)


class TestBuildPipeline:
    def test_end_to_end_small_corpus(self):
        lines = [
            snli_line(caption="1.jpg#0", pair="p1", label="entailment"),
            snli_line(caption="1.jpg#1", pair="p2", label="neutral"),
            snli_line(caption="2.jpg#0", pair="p3", label="contradiction"),
            snli_line(caption="3.jpg#0", pair="p4", label="-"),
            snli_line(caption="4.jpg#0", pair="p5", label="entailment"),
            "broken json",
            snli_line(caption="9.jpg#0", pair="p6", label="neutral"),
        ]
        spec = SplitSpec(train={"1.jpg"}, val={"2.jpg"}, test={"4.jpg"})
        issues = []
        train, val, test = build_snli_ve(lines, spec, issues=issues)
        assert [e.pair_id for e in train] == ["p1", "p2"]
        assert [e.pair_id for e in val] == ["p3"]
        assert [e.pair_id for e in test] == ["p5"]
        # One malformed line, one image missing from every split.
        assert len(issues) == 2

    def test_strict_mode_propagates(self):
        spec = SplitSpec(train={"1.jpg"}, val={"2.jpg"}, test={"3.jpg"})
        with pytest.raises(FormatError):
            build_snli_ve(["oops"], spec, strict=True)


ascii_text = st.text(
    alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=40)


@settings(max_examples=80, deadline=None)
@given(ascii_text)
def test_tokenize_is_pure_and_well_formed(s):
    first = tokenize(s)
    assert first == tokenize(s)
    for token in first:
        assert token
        assert token == token.lower()
        assert not any(c.isspace() for c in token)
    assert tokenize(s.upper()) == tokenize(s.lower())


@st.composite
def random_corpus(draw):
    n_images = draw(st.integers(min_value=3, max_value=12))
    image_ids = [f"{i + 1}.jpg" for i in range(n_images)]
    # Each image gets routed to one of the splits or left out entirely.
    route = draw(st.lists(st.integers(min_value=0, max_value=3),
                          min_size=n_images, max_size=n_images))
    sets = {0: set(), 1: set(), 2: set(), 3: set()}
    for img, r in zip(image_ids, route):
        sets[r].add(img)
    # Guarantee non-empty split sets with reserved ids.
    train = sets[0] | {"900001.jpg"}
    val = sets[1] | {"900002.jpg"}
    test = sets[2] | {"900003.jpg"}
    spec = SplitSpec(train=train, val=val, test=test)
    n_examples = draw(st.integers(min_value=0, max_value=30))
    picks = draw(st.lists(st.integers(min_value=0, max_value=n_images - 1),
                          min_size=n_examples, max_size=n_examples))
    examples = [ve(image=image_ids[p], pair=f"p{i}")
                for i, p in enumerate(picks)]
    return spec, examples


@settings(max_examples=60, deadline=None)
@given(random_corpus())
def test_partition_is_disjoint_total_and_exclusive(case):
    spec, examples = case
    issues = []
    train, val, test = partition_by_image(examples, spec, issues=issues)
    images = [set(e.image_id for e in split) for split in (train, val, test)]
    assert not (images[0] & images[1])
    assert not (images[0] & images[2])
    assert not (images[1] & images[2])
    kept = len(train) + len(val) + len(test)
    assert kept + len(issues) == len(examples)
    kept_pairs = sorted(e.pair_id for e in train + val + test)
    assert len(set(kept_pairs)) == kept
