#include <gtest/gtest.h>

#include "cure/parse.hpp"
#include "cure/taskgen.hpp"
#include "support.hpp"

using namespace cure;

TEST(ParseStrict, Cardiomegaly) {
    const auto p = parse_output("Cardiomegaly: [0.57,0.65,0.55,0.37]", Task::PG, ParseMode::strict);
    EXPECT_EQ(p.location_or_phrase, "Cardiomegaly");
    ASSERT_EQ(p.boxes.size(), 1u);
    EXPECT_EQ(p.boxes[0], (NormBox{0.57, 0.65, 0.55, 0.37}));
    EXPECT_FALSE(p.salvaged);
}

TEST(ParseStrict, AbdomenBoth) {
    const auto p = parse_output(
        "Location of the abdomen: [0.48,0.78,0.73,0.45]. Description: No free air below the right hemidiaphragm is seen.",
        Task::AGRG_BOTH, ParseMode::strict);
    EXPECT_EQ(p.location_or_phrase, "abdomen");
    ASSERT_EQ(p.boxes.size(), 1u);
    // The box reaches y = 1.005, so it is stored clipped to the frame:
    // y spans [0.555, 1] -> cy 0.7775, h 0.445.
    EXPECT_NEAR(p.boxes[0].cx, 0.48, 1e-12);
    EXPECT_NEAR(p.boxes[0].cy, 0.7775, 1e-12);
    EXPECT_NEAR(p.boxes[0].w, 0.73, 1e-12);
    EXPECT_NEAR(p.boxes[0].h, 0.445, 1e-12);
    EXPECT_EQ(p.warnings.size(), 1u);
    EXPECT_EQ(p.description, "No free air below the right hemidiaphragm is seen.");
    // ...and the clipped box still renders as the original literal.
    EXPECT_EQ(format_box(p.boxes[0]), "[0.48,0.78,0.73,0.45]");
}

TEST(ParseStrict, RejectsFreeText) {
    EXPECT_THROW(parse_output("hello world", Task::PG, ParseMode::strict), ParseError);
    EXPECT_THROW(parse_output("Location of the abdomen: [0.48,0.78,0.73]", Task::AGRG_LOCATE, ParseMode::strict), ParseError);
    EXPECT_THROW(parse_output("Location of the abdomen: [0.48,0.78,0.73,0.45]", Task::AGRG_LOCATE, ParseMode::strict), ParseError);
    EXPECT_THROW(parse_output("Description of the abdomen: ", Task::AGRG_DESCRIBE, ParseMode::strict), ParseError);
    EXPECT_THROW(parse_output("x: [a,0.1,0.1,0.1]", Task::PG, ParseMode::strict), ParseError);
}

TEST(ParseStrict, ErrorCarriesPosition) {
    try {
        parse_output("Location of abdomen", Task::AGRG_LOCATE, ParseMode::strict);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.position(), 0u);
    }
}

TEST(ParseStrict, OutOfRangeIsClampedWithWarning) {
    const auto p = parse_output("x: [1.05,0.50,0.20,0.20]", Task::PG, ParseMode::strict);
    ASSERT_EQ(p.boxes.size(), 1u);
    EXPECT_NEAR(p.boxes[0].cx, 0.975, 1e-12);
    EXPECT_NEAR(p.boxes[0].w, 0.05, 1e-12);
    EXPECT_FALSE(p.warnings.empty());
}

TEST(ParseStrict, GrgMixedSentences) {
    const auto p = parse_output("atelectasis [0.29,0.66,0.18,0.20]. No pneumothorax. effusion [0.20,0.70,0.10,0.10] [0.80,0.70,0.10,0.10].",
                                Task::GRG, ParseMode::strict);
    ASSERT_EQ(p.findings.size(), 3u);
    EXPECT_EQ(p.findings[0].phrase, "atelectasis");
    EXPECT_EQ(p.findings[1].phrase, "No pneumothorax");
    EXPECT_TRUE(p.findings[1].boxes.empty());
    EXPECT_EQ(p.findings[2].boxes.size(), 2u);
    EXPECT_EQ(p.boxes.size(), 3u);
}

TEST(ParseLenient, SalvagesBoxesFromProse) {
    const auto p = parse_output("I think there is cardiomegaly at [0.5, 0.6, 0.3, 0.2] and more", Task::PG, ParseMode::lenient);
    EXPECT_TRUE(p.salvaged);
    ASSERT_EQ(p.boxes.size(), 1u);
    EXPECT_EQ(p.boxes[0], (NormBox{0.5, 0.6, 0.3, 0.2}));
    EXPECT_NE(p.location_or_phrase.find("cardiomegaly"), std::string::npos);
}

TEST(ParseLenient, NeverThrows) {
    for (const char* s : {"", "[[[", "]]", "[0.1,0.1,0,0]", "Location of the", "no boxes here."})
        for (Task t : {Task::PG, Task::GRG, Task::AGRG_LOCATE, Task::AGRG_DESCRIBE, Task::AGRG_BOTH})
            EXPECT_NO_THROW(parse_output(s, t, ParseMode::lenient)) << s;
}

TEST(ParseLenient, StrictMatchIsNotSalvaged) {
    const auto p = parse_output("Cardiomegaly: [0.57,0.65,0.55,0.37]", Task::PG, ParseMode::lenient);
    EXPECT_FALSE(p.salvaged);
}

TEST(ParseLenient, DescriptionRecovered) {
    const auto p = parse_output("location of the abdomen: [0.48, 0.78, 0.73, 0.45] description: Normal bowel gas.", Task::AGRG_BOTH,
                                ParseMode::lenient);
    EXPECT_TRUE(p.salvaged);
    EXPECT_EQ(p.location_or_phrase, "abdomen");
    EXPECT_EQ(p.description, "Normal bowel gas.");
    EXPECT_EQ(p.boxes.size(), 1u);
}

TEST(StripBoxes, RemovesGroupsAndSpaces) {
    EXPECT_EQ(strip_box_groups("atelectasis [0.29,0.66,0.18,0.20]."), "atelectasis.");
    EXPECT_EQ(strip_box_groups("a [0.1,0.1,0.1,0.1] [0.2,0.2,0.1,0.1]. b."), "a. b.");
    EXPECT_EQ(strip_box_groups("no boxes"), "no boxes");
}

// Round trip over every template on random records.
TEST(RoundTrip, RenderThenStrictParse) {
    std::mt19937_64 rng(2024);
    const Task tasks[] = {Task::PG, Task::GRG, Task::AGRG_LOCATE, Task::AGRG_DESCRIBE, Task::AGRG_BOTH};
    for (int i = 0; i < 500; ++i) {
        const Task t = tasks[i % 5];
        const auto rec = testkit::random_record(rng, t);
        const auto inst = render_instruction(rec);
        const auto p = parse_output(inst.response, t, ParseMode::strict);
        if (t == Task::GRG) {
            ASSERT_EQ(p.findings.size(), rec.findings.size());
            for (std::size_t k = 0; k < rec.findings.size(); ++k) {
                EXPECT_EQ(p.findings[k].phrase, rec.findings[k].phrase);
                EXPECT_EQ(p.findings[k].boxes, rec.findings[k].boxes);
            }
            continue;
        }
        if (t == Task::PG) EXPECT_EQ(p.location_or_phrase, *rec.text);
        else EXPECT_EQ(p.location_or_phrase, rec.category);
        EXPECT_EQ(p.boxes, rec.boxes);
        if (t == Task::AGRG_DESCRIBE || t == Task::AGRG_BOTH) {
            EXPECT_EQ(p.description, rec.text);
        }
    }
}
