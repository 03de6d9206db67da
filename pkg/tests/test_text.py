from __future__ import annotations

from hypothesis import given
from hypothesis import strategies as st

from radfollow.synthetic import SyntheticConfig, generate_synthetic
from radfollow.text import load_abbreviations, sentence_spans, split_sentences, tokenize

OBSTETRIC = (
    "IMPRESSION\n"
    "Singleton pregnancy. Size consistent with dates. Anatomic survey limited by maternal body habitus "
    "and fetal position. Inadequate views of fetal heart and spine. Given family history, would recommend "
    "repeat ultrasound in 4-5 weeks to evaluate fetal growth and complete anatomic survey. If unable to "
    "visualize fetal heart at that time, consider fetal echo.\n"
)


def texts(text):
    return [s.text for s in split_sentences(text)]


def test_two_sentences():
    assert texts("No fracture. Follow-up advised.") == ["No fracture.", "Follow-up advised."]


def test_title_abbreviation_does_not_split():
    assert texts("Dr. Smith was notified.") == ["Dr. Smith was notified."]


def test_other_abbreviations():
    assert len(texts("Nodule measures 4 mm. in diameter, i.e. stable.")) == 1
    assert len(texts("Compare with prior, e.g. March study.")) == 1


def test_recommendation_isolated_in_obstetric_impression():
    sents = texts(OBSTETRIC)
    rec = [s for s in sents if "would recommend repeat ultrasound" in s]
    assert rec == ["Given family history, would recommend repeat ultrasound in 4-5 weeks to evaluate fetal "
                   "growth and complete anatomic survey."]
    assert len(sents) == 6
    assert "IMPRESSION" not in " ".join(sents)


def test_headers_break_and_are_dropped():
    text = "FINDINGS:\nLiver normal\nIMPRESSION: No acute disease. Recommend CT."
    assert texts(text) == ["Liver normal", "No acute disease.", "Recommend CT."]


def test_blank_line_breaks():
    assert texts("first part\n\nsecond part") == ["first part", "second part"]


def test_lowercase_after_period_does_not_split():
    assert texts("Measures 2.5 cm. stable since prior.") == ["Measures 2.5 cm. stable since prior."]


def test_newline_after_terminator_splits():
    assert texts("No effusion.\nheart normal.") == ["No effusion.", "heart normal."]


def test_no_terminator_gives_one_sentence():
    assert texts("no terminator at all") == ["no terminator at all"]


def test_tokenize_examples():
    assert [t.surface for t in tokenize("in 4-5 weeks.")] == ["in", "4-5", "weeks", "."]
    assert [t.surface for t in tokenize("CT scan")] == ["CT", "scan"]
    assert tokenize("") == []
    assert [t.surface for t in tokenize("2.5 cm follow-up")] == ["2.5", "cm", "follow", "-", "up"]


def test_token_norm_and_offsets():
    toks = tokenize("Repeat CT", offset=10)
    assert [(t.norm, t.begin, t.end) for t in toks] == [("repeat", 10, 16), ("ct", 17, 19)]


def test_abbreviation_file(tmp_path):
    p = tmp_path / "abbr.txt"
    p.write_text("Foo.\n\nbar.\n", encoding="utf-8")
    abbr = load_abbreviations(p)
    assert abbr == frozenset({"foo.", "bar."})
    assert texts_with("See foo. Next one.", abbr) == ["See foo. Next one."]
    assert "dr." in load_abbreviations()


def texts_with(text, abbr):
    return [s.text for s in split_sentences(text, abbreviations=abbr)]


report_text = st.lists(
    st.sampled_from(["No fracture.", "Dr. Smith called.", "FINDINGS:", "\n", "\n\n", " ", "IMPRESSION: ok.",
                     "4-5 weeks", "Recommend CT in 3 months.", "e.g. this", "?", "!", "lower case."]),
    max_size=20,
).map("".join)


@given(report_text)
def test_span_reconstruction(text):
    spans = sentence_spans(text)
    prev = 0
    for b, e in spans:
        assert prev <= b < e <= len(text)
        prev = e
    for s in split_sentences(text):
        assert text[s.begin : s.end] == s.text
        last = s.begin
        for t in s.tokens:
            assert text[t.begin : t.end] == t.surface
            assert s.begin <= last <= t.begin < t.end <= s.end
            last = t.end


@given(st.text(max_size=60))
def test_tokens_cover_all_non_space(text):
    covered = "".join(t.surface for t in tokenize(text))
    assert covered == "".join(c for c in text if not c.isspace())


def test_sentences_per_report_mimic():
    # a generator configured at 12.55 sentences per report
    cfg = SyntheticConfig(n_reports=400, patients=120, sentences_per_report=12.55)
    corpus = generate_synthetic(cfg, seed=5)
    total = sum(len(split_sentences(a.report.text)) for a in corpus.reports)
    mean = total / len(corpus.reports)
    assert abs(mean - 12.55) <= 0.2 * 12.55
