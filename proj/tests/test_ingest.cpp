#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "cure/ingest.hpp"
#include "cure/taskgen.hpp"

using namespace cure;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& content) {
    const auto p = std::filesystem::temp_directory_path() / ("cure_ingest_" + name);
    write_atomic(p, content);
    return p;
}

}  // namespace

TEST(Ingest, SceneGraphRowMakesThreeSubtasks) {
    const auto p = write_tmp("sg.jsonl",
                             R"({"image_id":"m1","location":"abdomen","box":[0.48,0.78,0.73,0.45],"sentence":"No free air below the right hemidiaphragm is seen.","has_abnormality":false,"has_device":false})"
                             "\n");
    const auto recs = load_records(p, InputFormat::scene_graph, {"mimic-agrg"});
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].task, Task::AGRG_BOTH);
    EXPECT_EQ(recs[1].task, Task::AGRG_LOCATE);
    EXPECT_EQ(recs[2].task, Task::AGRG_DESCRIBE);
    for (const auto& r : recs) {
        EXPECT_EQ(r.category, "abdomen");
        EXPECT_EQ(r.source_id, "mimic-agrg");
        EXPECT_EQ(r.has_abnormality, false);
    }
    EXPECT_EQ(render_instruction(recs[0]).response,
              "Location of the abdomen: [0.48,0.78,0.73,0.45]. Description: No free air below the right hemidiaphragm is seen.");
    EXPECT_TRUE(recs[2].boxes.empty());
    EXPECT_FALSE(recs[1].text);
    std::filesystem::remove(p);
}

TEST(Ingest, SceneGraphBoxOnly) {
    const auto p = write_tmp("sg2.jsonl", R"({"image_id":"m1","source_id":"s","location":"spine","box":[0.5,0.5,0.1,0.8]})" "\n");
    const auto recs = load_records(p, InputFormat::scene_graph);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].task, Task::AGRG_LOCATE);
    std::filesystem::remove(p);
}

TEST(Ingest, DetectionRowsBecomePgAndPseudoReport) {
    const auto p = write_tmp("det.jsonl",
                             R"({"image_id":"v1","label":"Cardiomegaly","box":[0.57,0.65,0.55,0.37]})" "\n"
                             R"({"image_id":"v1","label":"ILD","boxes":[[0.3,0.4,0.2,0.2],[0.7,0.4,0.2,0.2]]})" "\n"
                             R"({"image_id":"v1","label":"COPD"})" "\n"
                             R"({"image_id":"v2","label":"Nodule/Mass","box":[0.2,0.2,0.05,0.05]})" "\n");
    const auto recs = load_records(p, InputFormat::detection, {"vindr"});
    ASSERT_EQ(recs.size(), 5u);
    EXPECT_EQ(recs[0].task, Task::PG);
    EXPECT_EQ(render_instruction(recs[0]).response, "Cardiomegaly: [0.57,0.65,0.55,0.37]");
    EXPECT_EQ(*recs[1].text, "Interstitial lung disease");
    EXPECT_EQ(recs[1].category, "ILD");
    EXPECT_EQ(recs[2].image_id, "v2");
    EXPECT_EQ(recs[3].task, Task::GRG);
    EXPECT_EQ(recs[3].image_id, "v1");
    ASSERT_EQ(recs[3].findings.size(), 3u);
    EXPECT_TRUE(recs[3].findings[2].boxes.empty());
    EXPECT_EQ(recs[3].findings[2].phrase, "Chronic obstructive pulmonary disease");
    EXPECT_EQ(recs[4].image_id, "v2");
    std::filesystem::remove(p);
}

TEST(Ingest, PhraseBoxesAndReports) {
    const auto p = write_tmp("pb.jsonl", R"({"image_id":"p1","source_id":"padchest-pg","phrase":"cardiomegalia","label":"Cardiomegaly","boxes":[[0.5,0.5,0.4,0.3]]})" "\n");
    const auto recs = load_records(p, InputFormat::phrase_boxes);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].category, "Cardiomegaly");
    EXPECT_EQ(*recs[0].label, "Cardiomegaly");
    EXPECT_EQ(expand_padchest_labels(recs).size(), 2u);

    const auto q = write_tmp("gr.jsonl",
                             R"({"image_id":"g1","source_id":"padchest-grg","findings":[{"phrase":"atelectasis","boxes":[[0.29,0.66,0.18,0.20]]},{"phrase":"No pneumothorax"}]})"
                             "\n");
    const auto g = load_records(q, InputFormat::grounded_report);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(render_instruction(g[0]).response, "atelectasis [0.29,0.66,0.18,0.20]. No pneumothorax.");
    std::filesystem::remove(p);
    std::filesystem::remove(q);
}

TEST(Ingest, StrictVersusLenient) {
    const auto p = write_tmp("bad.jsonl",
                             R"({"image_id":"p1","source_id":"s","phrase":"x","boxes":[[0.5,0.5,0.4,0.3]]})" "\n"
                             R"({"image_id":"p2","source_id":"s","phrase":"y","boxes":[[1.5,0.5,0.4,0.3]]})" "\n");
    try {
        load_records(p, InputFormat::phrase_boxes);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::vector<std::string> warnings;
    LoadOptions opt;
    opt.strict = false;
    EXPECT_EQ(load_records(p, InputFormat::phrase_boxes, opt, &warnings).size(), 1u);
    EXPECT_EQ(warnings.size(), 1u);
    std::filesystem::remove(p);
}

TEST(Fixture, DeterministicAndSeedSensitive) {
    FixtureSpec spec = fixture_spec_from_json(nlohmann::json::parse(R"({"PG":{"pneumonia":10,"effusion":5},"AGRG_BOTH":{"spine":4}})"));
    const auto a = make_fixture_dataset(1, spec);
    ASSERT_EQ(a.size(), 19u);
    EXPECT_EQ(records_to_jsonl(a), records_to_jsonl(make_fixture_dataset(1, spec)));
    const auto b = make_fixture_dataset(2, spec);
    EXPECT_NE(a[0].boxes, b[0].boxes);
    for (const auto& r : a) {
        EXPECT_NO_THROW(render_instruction(r));
        for (const auto& box : r.boxes) {
            EXPECT_TRUE(is_valid_box(box));
            EXPECT_EQ(format_box(box), format_box({std::round(box.cx * 100) / 100, std::round(box.cy * 100) / 100,
                                                   std::round(box.w * 100) / 100, std::round(box.h * 100) / 100}));
        }
        if (r.task == Task::AGRG_BOTH) {
            EXPECT_TRUE(r.has_abnormality && r.has_device);
        }
    }
}

TEST(Fixture, SourcesIndependent) {
    FixtureSpec one = fixture_spec_from_json(nlohmann::json::parse(R"({"PG":{"pneumonia":10}})"));
    FixtureSpec two = fixture_spec_from_json(nlohmann::json::parse(R"({"PG":{"pneumonia":10},"GRG":{"report":3}})"));
    const auto a = make_fixture_dataset(5, one);
    std::vector<AnnotationRecord> b;
    for (const auto& r : make_fixture_dataset(5, two))
        if (r.source_id == "fixture-pg") b.push_back(r);
    EXPECT_EQ(a, b);
}

namespace {

// 4 locations; per location 60 text units per flag combination and 100
// text-free units. Each text unit also has a LOCATE-only duplicate record.
std::vector<AnnotationRecord> benchmark_pool() {
    std::vector<AnnotationRecord> pool;
    int img = 0;
    for (const char* loc : {"abdomen", "left lung", "right lung", "spine"}) {
        for (int combo = 0; combo < 4; ++combo)
            for (int i = 0; i < 60; ++i) {
                AnnotationRecord loc_only;
                loc_only.image_id = "i" + std::to_string(img++);
                loc_only.source_id = "agrg";
                loc_only.task = Task::AGRG_LOCATE;
                loc_only.category = loc;
                loc_only.boxes = {{0.5, 0.5, 0.2, 0.2}};
                loc_only.has_abnormality = combo & 1;
                loc_only.has_device = (combo & 2) != 0;
                auto both = loc_only;
                both.task = Task::AGRG_BOTH;
                both.text = "Something here.";
                pool.push_back(loc_only);
                pool.push_back(both);
            }
        for (int i = 0; i < 100; ++i) {
            AnnotationRecord r;
            r.image_id = "i" + std::to_string(img++);
            r.source_id = "agrg";
            r.task = Task::AGRG_DESCRIBE;
            r.category = loc;
            r.text = i % 2 ? "N/A" : "";
            pool.push_back(r);
        }
    }
    return pool;
}

}  // namespace

TEST(BenchmarkSubset, SizesAndBalance) {
    const auto pool = benchmark_pool();
    const auto sub = build_benchmark_subset(pool, {}, 11);
    ASSERT_EQ(sub.size(), 1000u);
    std::set<std::pair<std::string, std::string>> units;
    std::size_t with_text = 0;
    std::map<std::string, int> without_per_loc;
    std::map<std::tuple<std::string, bool, bool>, int> per_stratum;
    for (const auto& r : sub) {
        EXPECT_TRUE(units.insert({r.image_id, r.category}).second) << "duplicate unit";
        if (r.text && !r.text->empty() && *r.text != "N/A") {
            ++with_text;
            ++per_stratum[{r.category, *r.has_abnormality, *r.has_device}];
        } else {
            ++without_per_loc[r.category];
        }
    }
    EXPECT_EQ(with_text, 700u);
    ASSERT_EQ(per_stratum.size(), 16u);
    for (const auto& [k, n] : per_stratum) EXPECT_TRUE(n == 43 || n == 44);
    for (const auto& [k, n] : without_per_loc) EXPECT_EQ(n, 75);
    EXPECT_EQ(records_to_jsonl(sub), records_to_jsonl(build_benchmark_subset(pool, {}, 11)));
}

TEST(BenchmarkSubset, EmptyRequestAndShortfall) {
    const auto pool = benchmark_pool();
    EXPECT_TRUE(build_benchmark_subset(pool, {0, 0, {}}, 1).empty());
    BenchmarkSubsetSpec spec{700, 300, {{"abdomen", true, true}, {"trachea", false, false}}};
    try {
        build_benchmark_subset(pool, spec, 1);
        FAIL();
    } catch (const InsufficientStratum& e) {
        EXPECT_EQ(e.requested(), 350u);
        EXPECT_EQ(e.available(), 60u);
        EXPECT_NE(std::string(e.what()).find("trachea"), std::string::npos);
    }
}
