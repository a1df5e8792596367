#include <gtest/gtest.h>

#include "cure/taskgen.hpp"
#include "support.hpp"

using namespace cure;

namespace {

AnnotationRecord cardiomegaly() {
    AnnotationRecord r;
    r.image_id = "img1";
    r.source_id = "padchest-pg";
    r.task = Task::PG;
    r.category = "Cardiomegaly";
    r.text = "Cardiomegaly";
    r.boxes = {{0.57, 0.65, 0.55, 0.37}};
    return r;
}

AnnotationRecord abdomen(Task t) {
    AnnotationRecord r;
    r.image_id = "img2";
    r.source_id = "mimic-agrg";
    r.task = t;
    r.category = "abdomen";
    r.text = "No free air below the right hemidiaphragm is seen.";
    if (t != Task::AGRG_DESCRIBE) r.boxes = {{0.48, 0.78, 0.73, 0.45}};
    return r;
}

}  // namespace

TEST(FormatBox, TwoDecimals) {
    EXPECT_EQ(format_box({0.48, 0.78, 0.73, 0.45}), "[0.48,0.78,0.73,0.45]");
    EXPECT_EQ(format_box({0, 0, 1, 1}), "[0.00,0.00,1.00,1.00]");
    EXPECT_EQ(format_box({0.333, 0.5, 0.1, 0.1}), "[0.33,0.50,0.10,0.10]");
}

TEST(FormatBox, NeverNegativeZero) { EXPECT_EQ(format_box({-0.001, 0.5, 0.1, 0.1}), "[0.00,0.50,0.10,0.10]"); }

TEST(Render, PgCardiomegaly) {
    const auto inst = render_instruction(cardiomegaly());
    EXPECT_EQ(inst.instruction, "Ground the phrase: Cardiomegaly");
    EXPECT_EQ(inst.response, "Cardiomegaly: [0.57,0.65,0.55,0.37]");
    EXPECT_EQ(inst.structured, cardiomegaly());
}

TEST(Render, PgMultiBoxSpaceSeparated) {
    auto r = cardiomegaly();
    r.boxes.push_back({0.2, 0.3, 0.1, 0.1});
    EXPECT_EQ(render_instruction(r).response, "Cardiomegaly: [0.57,0.65,0.55,0.37] [0.20,0.30,0.10,0.10]");
}

TEST(Render, AgrgBothAbdomen) {
    const auto inst = render_instruction(abdomen(Task::AGRG_BOTH));
    EXPECT_EQ(inst.instruction, "Locate and describe the abdomen.");
    EXPECT_EQ(inst.response, "Location of the abdomen: [0.48,0.78,0.73,0.45]. Description: No free air below the right hemidiaphragm is seen.");
}

TEST(Render, AgrgLocateAndDescribe) {
    const auto loc = render_instruction(abdomen(Task::AGRG_LOCATE));
    EXPECT_EQ(loc.instruction, "Locate the abdomen.");
    EXPECT_EQ(loc.response, "Location of the abdomen: [0.48,0.78,0.73,0.45].");
    const auto desc = render_instruction(abdomen(Task::AGRG_DESCRIBE));
    EXPECT_EQ(desc.instruction, "Describe the abdomen.");
    EXPECT_EQ(desc.response, "Description of the abdomen: No free air below the right hemidiaphragm is seen.");
}

TEST(Render, GrgSentences) {
    AnnotationRecord r;
    r.task = Task::GRG;
    r.category = "report";
    r.findings = {{"atelectasis", {{0.29, 0.66, 0.18, 0.20}}},
                  {"No pneumothorax.", {}},
                  {"pleural effusion", {{0.2, 0.7, 0.1, 0.1}, {0.8, 0.7, 0.1, 0.1}}}};
    const auto inst = render_instruction(r);
    EXPECT_EQ(inst.instruction, "Generate a grounded report.");
    EXPECT_EQ(inst.response,
              "atelectasis [0.29,0.66,0.18,0.20]. No pneumothorax. pleural effusion [0.20,0.70,0.10,0.10] [0.80,0.70,0.10,0.10].");
}

TEST(Render, MissingFields) {
    auto pg = cardiomegaly();
    pg.boxes.clear();
    EXPECT_THROW(render_instruction(pg), MissingField);
    pg = cardiomegaly();
    pg.text.reset();
    EXPECT_THROW(render_instruction(pg), MissingField);
    auto desc = abdomen(Task::AGRG_DESCRIBE);
    desc.text = "  ";
    EXPECT_THROW(render_instruction(desc), MissingField);
    auto loc = abdomen(Task::AGRG_LOCATE);
    loc.boxes.clear();
    try {
        render_instruction(loc);
        FAIL();
    } catch (const MissingField& e) {
        EXPECT_EQ(e.field(), "boxes");
        EXPECT_EQ(e.task(), Task::AGRG_LOCATE);
    }
    AnnotationRecord grg;
    grg.task = Task::GRG;
    EXPECT_THROW(render_instruction(grg), MissingField);
}

TEST(Templates, DefaultSetValid) {
    EXPECT_TRUE(templates_valid(TemplateSet{}));
    TemplateSet bad;
    bad.both.response = "Location of the {location}: {boxes}.";
    EXPECT_FALSE(templates_valid(bad));
}

TEST(ExpandLabels, AddsLabelPairOutsideTest) {
    auto r = cardiomegaly();
    r.text = "enlarged cardiac silhouette";
    r.label = "Cardiomegaly";
    auto t = r;
    t.split = Split::test;
    const std::vector<AnnotationRecord> in{r, t};
    const auto out = expand_padchest_labels(in);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0], r);
    EXPECT_EQ(out[1].task, Task::PG);
    EXPECT_EQ(*out[1].text, "Cardiomegaly");
    EXPECT_EQ(out[1].boxes, r.boxes);
    EXPECT_EQ(out[2], t);
}

TEST(ExpandLabels, UnlabelledPassThrough) {
    const std::vector<AnnotationRecord> in{cardiomegaly()};
    EXPECT_EQ(expand_padchest_labels(in), in);
}

TEST(LocationSets, Nested) {
    const auto a = location_set(LocationSetName::AGRG9).locations;
    const auto b = location_set(LocationSetName::AGRG29).locations;
    const auto c = location_set(LocationSetName::AGRG38).locations;
    ASSERT_EQ(a.size(), 9u);
    ASSERT_EQ(b.size(), 29u);
    ASSERT_EQ(c.size(), 38u);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    EXPECT_TRUE(std::equal(b.begin(), b.end(), c.begin()));
    EXPECT_EQ(a[0], "abdomen");
    EXPECT_EQ(a[1], "cardiac silhouette");
}

TEST(AssembleReport, SkipsNaAndAppendsGrgLast) {
    std::vector<ParsedOutput> agrg(3);
    agrg[0].description = "Heart size is normal.";
    agrg[1].description = "N/A";
    agrg[2].description = "Lungs are clear.";
    ParsedOutput grg;
    grg.findings = {{"atelectasis", {{0.29, 0.66, 0.18, 0.20}}}};
    EXPECT_EQ(assemble_report(agrg, grg, false), "Heart size is normal. Lungs are clear. atelectasis [0.29,0.66,0.18,0.20].");
    EXPECT_EQ(assemble_report(agrg, grg, true), "Heart size is normal. Lungs are clear. atelectasis.");
    EXPECT_EQ(assemble_report({}, std::nullopt, true), "");
}
