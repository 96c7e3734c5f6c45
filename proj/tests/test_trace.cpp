#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "logitwitness/synthetic.hpp"
#include "logitwitness/trace.hpp"
#include "test_support.hpp"

using namespace lw;

namespace {

const std::string header = "{\"schema\":1}\n";

std::string two_way_line(const std::string& id, double p0, double p1, const char* tail = "null") {
    std::ostringstream os;
    os.precision(17);
    os << R"({"id":")" << id << R"(","label":"human","meta":{},"tokens":[{"lp":)" << std::log(p0)
       << R"(,"rank":1,"cand":[)" << std::log(p0) << "," << std::log(p1) << R"(],"tail":)" << tail << "}]}\n";
    return os.str();
}

TraceCorpus small_markov_corpus(std::uint64_t seed = 3) {
    const auto lang = make_peaked_language(6, 1.0, 0.3, 11);
    GenerateOptions go;
    go.seed = seed;
    go.meta = {{"source", "unit"}};
    return generate_corpus(lang, 5, 7, Label::machine, go);
}

} // namespace

TEST(ParseCorpus, MinimalValidLine) {
    const auto corpus = parse_corpus(header + two_way_line("a", 0.5, 0.5), true);
    ASSERT_EQ(corpus.size(), 1u);
    EXPECT_EQ(corpus.passages[0].id, "a");
    EXPECT_EQ(corpus.passages[0].tokens.size(), 1u);
    EXPECT_EQ(corpus.schema_version, 1);
}

TEST(ParseCorpus, StrictRejectsMassDeficitNamingPassage) {
    const auto text = header + two_way_line("short-mass", 0.6, 0.3);
    try {
        parse_corpus(text, true);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
        EXPECT_NE(std::string(e.what()).find("short-mass"), std::string::npos);
    }
}

TEST(ParseCorpus, LenientDropsMassViolationsAndCounts) {
    const auto text = header + two_way_line("bad", 0.6, 0.3) + two_way_line("good", 0.5, 0.5);
    ParseReport report;
    const auto corpus = parse_corpus(text, false, &report);
    ASSERT_EQ(corpus.size(), 1u);
    EXPECT_EQ(corpus.passages[0].id, "good");
    EXPECT_EQ(report.dropped, 1u);
}

TEST(ParseCorpus, TailMassCompletesTheDistribution) {
    std::ostringstream tail;
    tail.precision(17);
    tail << std::log(0.1);
    const auto corpus = parse_corpus(header + two_way_line("t", 0.6, 0.3, tail.str().c_str()), true);
    ASSERT_TRUE(corpus.passages[0].tokens[0].candidates.tail_logmass.has_value());
}

TEST(ParseCorpus, LargeTailCountsAWarning) {
    std::ostringstream tail;
    tail.precision(17);
    tail << std::log(0.1);
    ParseReport report;
    parse_corpus(header + two_way_line("t", 0.6, 0.3, tail.str().c_str()), true, &report);
    EXPECT_EQ(report.tail_warnings, 1u);
}

TEST(ParseCorpus, MalformedJsonReportsLineNumber) {
    const auto text = header + two_way_line("a", 0.5, 0.5) + "{not json\n";
    try {
        parse_corpus(text, false);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(ParseCorpus, EmptyCorpusIsAnError) {
    EXPECT_THROW(parse_corpus(header, true), Error);
    EXPECT_THROW(parse_corpus(std::string_view{}, true), Error);
}

TEST(ParseCorpus, MissingHeaderIsAnError) { EXPECT_THROW(parse_corpus(two_way_line("a", 0.5, 0.5), true), Error); }

TEST(ParseCorpus, UnsupportedSchemaIsAnError) {
    EXPECT_THROW(parse_corpus("{\"schema\":2}\n" + two_way_line("a", 0.5, 0.5), true), Error);
}

TEST(ParseCorpus, DuplicateIdsRejected) {
    EXPECT_THROW(parse_corpus(header + two_way_line("a", 0.5, 0.5) + two_way_line("a", 0.5, 0.5), true), Error);
}

TEST(ParseCorpus, StructuralViolationsRejectedEvenWhenLenient) {
    // candidates not sorted non-increasing
    const std::string unsorted =
        R"({"id":"u","label":"human","meta":{},"tokens":[{"lp":-1.2,"rank":1,"cand":[-1.2,-0.36],"tail":null}]})";
    EXPECT_THROW(parse_corpus(header + unsorted + "\n", false), Error);
    // observed log-prob above the best candidate
    const std::string above =
        R"({"id":"v","label":"human","meta":{},"tokens":[{"lp":-0.1,"rank":1,"cand":[-0.6931471805599453,-0.6931471805599453],"tail":null}]})";
    EXPECT_THROW(parse_corpus(header + above + "\n", false), Error);
    // rank below 1
    const std::string rank0 =
        R"({"id":"w","label":"human","meta":{},"tokens":[{"lp":-0.6931471805599453,"rank":0,"cand":[-0.6931471805599453,-0.6931471805599453],"tail":null}]})";
    EXPECT_THROW(parse_corpus(header + rank0 + "\n", false), Error);
    // zero-length passage
    const std::string empty = R"({"id":"z","label":"human","meta":{},"tokens":[]})";
    EXPECT_THROW(parse_corpus(header + empty + "\n", false), Error);
    // unknown label
    const std::string label =
        R"({"id":"l","label":"robot","meta":{},"tokens":[{"lp":-0.6931471805599453,"rank":1,"cand":[-0.6931471805599453,-0.6931471805599453],"tail":null}]})";
    EXPECT_THROW(parse_corpus(header + label + "\n", false), Error);
    // positive log-prob
    const std::string positive =
        R"({"id":"p","label":"human","meta":{},"tokens":[{"lp":0.5,"rank":1,"cand":[0.5],"tail":null}]})";
    EXPECT_THROW(parse_corpus(header + positive + "\n", false), Error);
}

TEST(ParseCorpus, WrongFieldTypeIsADomainErrorWithLine) {
    const std::string bad =
        R"({"id":"s","label":"human","meta":{},"tokens":[{"lp":"x","rank":1,"cand":[-0.6931471805599453,-0.6931471805599453],"tail":null}]})";
    try {
        parse_corpus(header + bad + "\n", true);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::domain);
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(SerializeCorpus, EmptyMetaIsPresentAsEmptyMap) {
    PassageTrace p;
    p.id = "m";
    p.tokens.push_back(lwtest::token_from_probs({0.5, 0.5}, 0));
    const std::string line = [&] {
        std::ostringstream os;
        serialize_passage(p, os);
        return os.str();
    }();
    EXPECT_NE(line.find(R"("meta":{})"), std::string::npos) << line;
    EXPECT_NE(line.find(R"("tail":null)"), std::string::npos);
}

TEST(SerializeCorpus, FieldOrderIsFixed) {
    const auto text = serialize_corpus(small_markov_corpus());
    const auto second_line = text.substr(text.find('\n') + 1);
    const auto id = second_line.find("\"id\"");
    const auto label = second_line.find("\"label\"");
    const auto meta = second_line.find("\"meta\"");
    const auto tokens = second_line.find("\"tokens\"");
    EXPECT_LT(id, label);
    EXPECT_LT(label, meta);
    EXPECT_LT(meta, tokens);
    EXPECT_EQ(text.rfind("{\"schema\":1}\n", 0), 0u);
}

TEST(SerializeCorpus, RoundTripIsIdentity) {
    const auto corpus = small_markov_corpus();
    const auto text = serialize_corpus(corpus);
    const auto back = parse_corpus(text, true);
    EXPECT_EQ(back, corpus);
    EXPECT_EQ(serialize_corpus(back), text);
}

TEST(SerializeCorpus, TwoSerializationsAreByteIdentical) {
    const auto corpus = small_markov_corpus();
    EXPECT_EQ(serialize_corpus(corpus), serialize_corpus(corpus));
}

TEST(SerializeCorpus, AwkwardFloatsRoundTripExactly) {
    PassageTrace p;
    p.id = "f";
    p.label = Label::unknown;
    p.meta = {{"k", "v with \"quotes\""}, {"a", "ü"}};
    TokenObservation tok;
    tok.candidates.logprobs = {std::log(1.0 / 3.0), std::log(1.0 / 3.0 - 1e-17), std::log(1.0 / 3.0 + 1e-16)};
    std::sort(tok.candidates.logprobs.begin(), tok.candidates.logprobs.end(), std::greater<>());
    tok.candidates.tail_logmass = -745.0;
    tok.observed_logprob = tok.candidates.logprobs[1];
    tok.observed_rank = 2;
    p.tokens.push_back(tok);
    TraceCorpus c;
    c.passages.push_back(p);
    const auto back = parse_corpus(serialize_corpus(c), true);
    EXPECT_EQ(back, c);
}

TEST(GoldenFile, RoundTripsByteIdentically) {
    const auto text = lwtest::read_file(LW_TEST_DATA_DIR "/synthetic_bit.jsonl");
    ASSERT_FALSE(text.empty());
    const auto corpus = parse_corpus(text, true);
    EXPECT_EQ(corpus.size(), 8u);
    EXPECT_EQ(serialize_corpus(corpus), text);
    EXPECT_EQ(parse_corpus(serialize_corpus(corpus), true), corpus);
}

TEST(NormalizedProbs, SumsToOneForTruncatedSupport) {
    CandidateDistribution c;
    c.logprobs = {std::log(0.5), std::log(0.3)};
    c.tail_logmass = std::log(0.2);
    const auto p = normalized_probs(c);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
    EXPECT_NEAR(p[0], 0.625, 1e-15);
}
