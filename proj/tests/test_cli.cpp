#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "cure/io.hpp"
#include "support.hpp"

using namespace cure;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("cure_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string put(const std::string& name, const std::string& content) const {
        write_atomic(dir / name, content);
        return path(name);
    }
    fs::path dir;
};

const char* kFixture = R"({"sources":[
  {"source_id":"fixture-pg","task":"PG","categories":{"A":40,"B":60}},
  {"source_id":"fixture-agrg","task":"AGRG_BOTH","categories":{"spine":20,"abdomen":20}}]})";

}  // namespace

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run({"bogus"}).code, cli::kExitUsage);
    EXPECT_EQ(run({}).code, cli::kExitUsage);
    EXPECT_EQ(run({"ingest"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"--version"}).code, cli::kExitOk);
    EXPECT_EQ(run({"--version"}).out, std::string(cli::kVersion) + "\n");
}

TEST_F(Cli, MissingInputIsDomainError) {
    EXPECT_EQ(run({"gen-tasks", "--records", path("nope.jsonl"), "--out", path("t.jsonl")}).code, cli::kExitDomain);
}

TEST_F(Cli, FixturePipelineIsReproducible) {
    const auto spec = put("spec.json", kFixture);
    for (const char* tag : {"a", "b"}) {
        const std::string t(tag);
        ASSERT_EQ(run({"--seed", "7", "ingest", "--fixture", spec, "--out", path("rec_" + t + ".jsonl")}).code, 0);
        ASSERT_EQ(run({"gen-tasks", "--records", path("rec_" + t + ".jsonl"), "--task", "all", "--out", path("tri_" + t + ".jsonl")}).code, 0);
        ASSERT_EQ(run({"--seed", "7", "augment", "--triplets", path("tri_" + t + ".jsonl"), "--out", path("aug_" + t + ".jsonl")}).code, 0);
    }
    for (const char* f : {"rec_", "tri_", "aug_"})
        EXPECT_EQ(read_text_file(path(std::string(f) + "a.jsonl")), read_text_file(path(std::string(f) + "b.jsonl"))) << f;
    EXPECT_EQ(read_records_jsonl(path("rec_a.jsonl")).size(), 140u);

    const auto manifest = read_json_file(path("rec_a.jsonl.manifest.json"));
    EXPECT_EQ(manifest["seed"], 7);
    EXPECT_EQ(manifest["output"]["sha256"], sha256_hex(read_text_file(path("rec_a.jsonl"))));

    ASSERT_EQ(run({"--seed", "8", "ingest", "--fixture", spec, "--out", path("rec_c.jsonl")}).code, 0);
    EXPECT_NE(read_text_file(path("rec_a.jsonl")), read_text_file(path("rec_c.jsonl")));
}

TEST_F(Cli, StochasticCommandsNeedSeed) {
    const auto spec = put("spec.json", kFixture);
    EXPECT_EQ(run({"ingest", "--fixture", spec, "--out", path("r.jsonl")}).code, cli::kExitUsage);
}

TEST_F(Cli, PlanSampleSimulate) {
    const auto spec = put("spec.json", kFixture);
    ASSERT_EQ(run({"--seed", "1", "ingest", "--fixture", spec, "--out", path("pool.jsonl")}).code, 0);

    // Curriculum plan without metrics is a domain error.
    EXPECT_EQ(run({"plan", "--pool", path("pool.jsonl"), "--out", path("w.json")}).code, cli::kExitDomain);
    ASSERT_EQ(run({"plan", "--pool", path("pool.jsonl"), "--inter", "natural", "--intra", "natural", "--out", path("w.json")}).code, 0);
    const auto w = read_json_file(path("w.json"));
    EXPECT_EQ(w.dump().find("fixture-pg") != std::string::npos, true);

    const auto metrics = put("m.json", R"([
      {"source":"fixture-pg","task":"PG","iou":0.5,"per_category":{"A":{"iou":0.2},"B":{"iou":0.8}}},
      {"source":"fixture-agrg","task":"AGRG","iou":0.9,"text_score":0.5,
       "per_subtask":{"AGRG_BOTH":{"spine":{"iou":0.9},"abdomen":{"iou":0.6}}}}])");
    ASSERT_EQ(run({"plan", "--pool", path("pool.jsonl"), "--metrics", metrics, "--out", path("w2.json")}).code, 0);

    ASSERT_EQ(run({"--seed", "3", "sample", "--weights", path("w2.json"), "--pool", path("pool.jsonl"), "--n", "50", "--out", path("s1.jsonl")}).code, 0);
    ASSERT_EQ(run({"--seed", "3", "sample", "--weights", path("w2.json"), "--pool", path("pool.jsonl"), "--n", "50", "--out", path("s2.jsonl")}).code, 0);
    EXPECT_EQ(read_text_file(path("s1.jsonl")), read_text_file(path("s2.jsonl")));

    const auto learner = put("l.json", R"({"default":{"e0":0.5,"k":0.001,"floor":0.05},
      "categories":[{"source":"fixture-pg","category":"A","e0":0.8}]})");
    ASSERT_EQ(run({"--seed", "3", "simulate", "--pool", path("pool.jsonl"), "--learner", learner, "--warmup", "200", "--interval", "200",
                   "--total", "600", "--out", path("run.json")})
                  .code,
              0);
    const auto r = read_json_file(path("run.json"));
    EXPECT_TRUE(r.contains("final_errors"));
}

TEST_F(Cli, EvalOnFixtureExitsZero) {
    const auto gold = put("gold.jsonl",
                          R"({"id":"1","image_id":"a","source_id":"s","task":"PG","category":"A","text":"A","boxes":[[0.5,0.5,0.4,0.4]],"split":"test"})"
                          "\n");
    const auto pred = put("pred.jsonl", R"({"id":"1","output":"A: [0.70,0.50,0.40,0.40]"})" "\n");
    ASSERT_EQ(run({"eval", "--pred", pred, "--gold", gold, "--out", path("rep.json")}).code, 0);
    const auto rep = read_json_file(path("rep.json"));
    EXPECT_NEAR(rep["micro_iou"].get<double>(), 1.0 / 3.0, 1e-12);
    const auto unknown = put("pred2.jsonl", R"({"id":"9","output":"x"})" "\n");
    EXPECT_EQ(run({"eval", "--pred", unknown, "--gold", gold, "--out", path("rep2.json")}).code, cli::kExitDomain);
}

TEST_F(Cli, JudgeWithMockReplyAndAggregate) {
    const auto gold = put("gt.jsonl", R"({"id":"1","report":"Cardiomegaly."})" "\n" R"({"id":"2","report":"Normal."})" "\n");
    const auto pred = put("gen.jsonl", R"({"id":"1","anatomy":"Spine","text":"Heart enlarged."})" "\n"
                                       R"({"id":"2","anatomy":"Spine","text":"Fracture."})" "\n");
    const auto reply = put("reply.txt",
                           R"({"reason":"r","gt_has_abnormalities":"yes","gt_has_devices":"no","gen_has_abnormalities":"yes","gen_has_devices":"no",)"
                           R"("gen_has_correct_abnormalities":"yes","gen_has_hallucinated_abnormalities":"yes","gen_has_correct_devices":"no",)"
                           R"("gen_has_hallucinated_devices":"no","nli_status":"Contradiction"})");
    ASSERT_EQ(run({"judge", "--pred", pred, "--gold", gold, "--mock-reply", reply, "--model", "m", "--out", path("v.jsonl")}).code, 0);
    ASSERT_EQ(run({"judge-aggregate", "--in", path("v.jsonl"), "--out", path("t.json")}).code, 0);
    EXPECT_EQ(read_json_file(path("t.json"))["verdict_failures"], 2);
    ASSERT_EQ(run({"judge", "--pred", pred, "--gold", gold, "--mock-reply", reply, "--lenient", "--out", path("v2.jsonl")}).code, 0);
    ASSERT_EQ(run({"judge-aggregate", "--in", path("v2.jsonl"), "--out", path("t2.json")}).code, 0);
    const auto t = read_json_file(path("t2.json"));
    EXPECT_EQ(t["verdict_failures"], 0);
    EXPECT_NEAR(t["mean"]["contradiction_rate"].get<double>(), 100.0, 1e-12);
    EXPECT_EQ(run({"judge", "--pred", pred, "--gold", gold, "--out", path("v3.jsonl")}).code, cli::kExitUsage);
}

TEST_F(Cli, PreprocessPgm) {
    IntensityGrid g{32, 32, 255, {}};
    for (int i = 0; i < 32 * 32; ++i) g.values.push_back(static_cast<std::uint16_t>((i * 7) % 256));
    std::string pgm = "P5\n32 32\n255\n";
    for (auto v : g.values) pgm += static_cast<char>(v);
    const auto in = put("in.pgm", pgm);
    ASSERT_EQ(run({"preprocess", "--in", in, "--out", path("out.pgm"), "--deterministic"}).code, 0);
    EXPECT_EQ(read_text_file(path("out.pgm")).rfind("P5\n448 448\n255\n", 0), 0u);
    EXPECT_EQ(run({"preprocess", "--in", in, "--out", path("o2.pgm"), "--deterministic", "--clip", "2"}).code, cli::kExitUsage);
}
