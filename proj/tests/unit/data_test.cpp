#include <algorithm>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "gpvls/data/builders.hpp"
#include "gpvls/data/manifest.hpp"
#include "gpvls/data/readers.hpp"
#include "gpvls/data/record.hpp"
#include "gpvls/errors.hpp"
#include "json.hpp"
#include "support/generators.hpp"

using namespace gpvls;
using namespace gpvls::data;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(GPVLS_FIXTURE_DIR) / "builders";

FrameAnnotation frame(std::string video, std::string id, Split split = Split::Train) {
    FrameAnnotation a;
    a.video_id = std::move(video);
    a.frame_id = std::move(id);
    a.split = split;
    return a;
}

nlohmann::json expected_counts() { return nlohmann::json::parse(read_file(kFixtures / "expected_counts.json")); }

void expect_golden(const BuildResult& result, const std::string& name) {
    for (Split split : {Split::Train, Split::Test}) {
        const auto dir = kFixtures / "golden" / name;
        const auto jsonl = dir / (std::string(to_string(split)) + ".jsonl");
        if (!std::filesystem::exists(jsonl)) continue;
        const auto records = select_split(result.records, split);
        EXPECT_EQ(serialize_jsonl(records), read_file(jsonl)) << name << " " << to_string(split);
        const auto gold = dir / (std::string(to_string(split)) + ".gold.json");
        if (std::filesystem::exists(gold)) {
            EXPECT_EQ(select_gold(result.gold, records).dump(2) + "\n", read_file(gold)) << name;
        }
    }
}

BuildResult build_cholect50(bool phase) {
    const auto splits = SplitAssignment::load(kFixtures / "cholect50" / "split.json");
    auto read = read_annotations_csv(kFixtures / "cholect50" / "annotations.csv", AnnotationKind::CholecT50, &splits);
    auto built = phase ? build_phase_vqa(read.annotations) : build_triplet_vqa(read.annotations);
    built.rejections.insert(built.rejections.end(), read.rejections.begin(), read.rejections.end());
    return built;
}

}  // namespace

TEST(Record, RoundTripIsFixedPoint) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const VQARecord r = test_support::random_record(rng);
        const std::string once = serialize_record(r);
        const VQARecord parsed = parse_record(once);
        EXPECT_EQ(parsed, r);
        EXPECT_EQ(serialize_record(parsed), once);
    }
}

TEST(Record, KeyOrderIsFixed) {
    const auto r = make_single_turn("x", std::nullopt, SourceDataset::MedQa, Split::Test, "q", "a");
    EXPECT_EQ(serialize_record(r),
              R"({"id":"x","image_ref":null,"source_dataset":"medqa","split":"test","turns":[{"role":"user","text":"q"},{"role":"assistant","text":"a"}]})");
}

TEST(Record, ParseRejectsUnknownKeysAndBrokenInvariants) {
    EXPECT_THROW(parse_record(R"({"id":"x","image_ref":null,"source_dataset":"medqa","split":"test","turns":[{"role":"user","text":"q"},{"role":"assistant","text":"a"}],"extra":1})"),
                 ValidationError);
    // assistant first
    EXPECT_THROW(parse_record(R"({"id":"x","image_ref":null,"source_dataset":"medqa","split":"test","turns":[{"role":"assistant","text":"a"}]})"),
                 ValidationError);
    // vision source without image
    EXPECT_THROW(parse_record(R"({"id":"x","image_ref":null,"source_dataset":"sar_vqa","split":"test","turns":[{"role":"user","text":"q"},{"role":"assistant","text":"a"}]})"),
                 ValidationError);
    // empty text
    EXPECT_THROW(parse_record(R"({"id":"x","image_ref":null,"source_dataset":"medqa","split":"test","turns":[{"role":"user","text":""},{"role":"assistant","text":"a"}]})"),
                 ValidationError);
}

TEST(Record, JsonlErrorsCarryLineNumber) {
    try {
        parse_jsonl("{\"id\":1}\n");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(Readers, ToolFieldForms) {
    EXPECT_EQ(parse_tool_field("[needle driver, cadiere forceps, nan, nan]"),
              (std::vector<std::string>{"needle driver", "cadiere forceps"}));
    EXPECT_EQ(parse_tool_field("needle driver;stapler"), (std::vector<std::string>{"needle driver", "stapler"}));
    EXPECT_TRUE(parse_tool_field("[nan, nan]").empty());
    EXPECT_TRUE(parse_tool_field("").empty());
    EXPECT_THROW(parse_tool_field("[stapler"), ValidationError);
}

TEST(Readers, TripletField) {
    const auto t = parse_triplet_field("hook:dissect:gallbladder; grasper:retract:liver");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[1], (TripletLabel{"grasper", "retract", "liver"}));
    EXPECT_THROW(parse_triplet_field("hook:dissect"), ValidationError);
}

TEST(Readers, SplitConfigKeepsVideosApart) {
    const auto splits = SplitAssignment::load(kFixtures / "cholect50" / "split.json");
    EXPECT_EQ(splits.lookup("VID92"), Split::Test);
    EXPECT_EQ(splits.lookup("VID01"), Split::Train);
    EXPECT_FALSE(splits.lookup("VID05").has_value());  // validation video is not used
}

TEST(Readers, ConflictingSplitRowsAreRejected) {
    const auto read = read_annotations_csv(kFixtures / "surgtoolloc" / "annotations.csv", AnnotationKind::SurgToolLoc);
    ASSERT_EQ(read.rejections.size(), 1u);
    EXPECT_NE(read.rejections[0].reason.find("both splits"), std::string::npos);
    std::map<std::string, std::set<Split>> seen;
    for (const auto& a : read.annotations) seen[a.video_id].insert(a.split);
    for (const auto& [video, splits] : seen) EXPECT_EQ(splits.size(), 1u) << video;
}

TEST(Readers, MissingColumnIsAnError) {
    const auto path = std::filesystem::temp_directory_path() / "gpvls_missing_col.csv";
    write_file(path, "video_id,frame_id,split\nv,1,train\n");
    EXPECT_THROW(read_annotations_csv(path, AnnotationKind::SarRarp50), ValidationError);
    std::filesystem::remove(path);
}

TEST(Builders, ActionAnswerFromPaper) {
    auto a = frame("v", "1");
    a.action = "positioning the needle tip";
    const auto r = build_action_vqa({a});
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].question(), "Identify the surgical action in this image");
    EXPECT_EQ(r.records[0].answer(), "The surgical action is positioning the needle tip.");
}

TEST(Builders, PhaseAnswerFromPaper) {
    auto a = frame("v", "1");
    a.phase = "Calot's triangle dissection";
    const auto r = build_phase_vqa({a});
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].answer(), "The surgical phase is Calot's triangle dissection.");
}

TEST(Builders, TripletsInCanonicalOrder) {
    auto a = frame("v", "1");
    a.triplets = {{"hook", "dissect", "gallbladder"}, {"grasper", "retract", "gallbladder"}};
    const auto r = build_triplet_vqa({a});
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].answer(),
              "The surgical action triplet(s) are <grasper, retract, gallbladder>, <hook, dissect, gallbladder>.");
    a.triplets = {{"hook", "dissect", "gallbladder"}};
    EXPECT_EQ(build_triplet_vqa({a}).records[0].answer(),
              "The surgical action triplet(s) are <hook, dissect, gallbladder>.");
}

TEST(Builders, ToolConjunction) {
    EXPECT_EQ(tool_answer({"needle driver", "cadiere forceps"}),
              "The surgical tools present are cadiere forceps and needle driver.");
    EXPECT_EQ(tool_answer({"stapler"}), "The surgical tools present are stapler.");
    EXPECT_EQ(tool_answer({"stapler", "clip applier", "needle driver"}),
              "The surgical tools present are clip applier, needle driver, and stapler.");
}

TEST(Builders, EmptyInputGivesEmptyOutput) {
    EXPECT_TRUE(build_action_vqa({}).records.empty());
    EXPECT_TRUE(build_phase_vqa({}).records.empty());
    EXPECT_TRUE(build_triplet_vqa({}).records.empty());
    EXPECT_TRUE(build_tool_vqa({}).records.empty());
    EXPECT_TRUE(ingest_synthssg({}).records.empty());
}

TEST(Builders, EmptyLabelsRejectedUnlessConfigured) {
    auto a = frame("v", "1");
    a.tools = std::vector<std::string>{};
    auto r = build_tool_vqa({a});
    EXPECT_TRUE(r.records.empty());
    ASSERT_EQ(r.rejections.size(), 1u);
    EXPECT_EQ(r.rejections[0].reason, "empty tool list");

    auto options = default_builder_options();
    options.empty_labels = EmptyLabelPolicy::AnswerNone;
    r = build_tool_vqa({a}, options);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.records[0].answer(), "No surgical tools are present.");
}

TEST(Builders, VocabularyAndCaseChecks) {
    auto a = frame("v", "1");
    a.triplets = {{"Hook", "dissect", "gallbladder"}};
    auto b = frame("v", "2");
    b.triplets = {{"hook", "dissect", "kidney"}};
    auto c = frame("v", "3");
    c.tools = {"laser"};
    EXPECT_EQ(build_triplet_vqa({a, b}).rejections.size(), 2u);
    EXPECT_EQ(build_tool_vqa({c}).rejections.size(), 1u);
}

TEST(Builders, RecordsPlusRejectionsEqualInput) {
    std::mt19937_64 rng(3);
    std::vector<FrameAnnotation> frames;
    for (int i = 0; i < 200; ++i) {
        auto a = frame("v" + std::to_string(rng() % 4), std::to_string(rng() % 60));
        if (rng() % 5) a.action = sar_rarp50_actions()[rng() % 8];
        frames.push_back(a);
    }
    const auto r = build_action_vqa(frames);
    EXPECT_EQ(r.records.size() + r.rejections.size(), frames.size());
}

TEST(Builders, OrderStableAndDeterministic) {
    std::vector<FrameAnnotation> frames;
    for (int i = 0; i < 30; ++i) {
        auto a = frame("v" + std::to_string(i % 3), std::to_string((i * 37) % 100));
        a.phase = "preparation";
        frames.push_back(a);
    }
    auto shuffled = frames;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
    EXPECT_EQ(serialize_jsonl(build_phase_vqa(frames).records), serialize_jsonl(build_phase_vqa(shuffled).records));
    // numeric frame ids sort numerically
    const auto r = build_phase_vqa(frames).records;
    EXPECT_EQ(r[0].id, "cholect50_phase/v0/0");
    EXPECT_EQ(r[1].id, "cholect50_phase/v0/11");
}

TEST(Builders, SynthSsgFlagsTerseAnswers) {
    const auto r = ingest_synthssg({{"a.png", "What is the role of the irrigator in this surgical procedure?",
                                     "The irrigator is likely being used to provide a clear view...", Split::Train, 1},
                                    {"b.png", "What is visible?", "Liver.", Split::Train, 2}});
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.records[0].question(), "What is the role of the irrigator in this surgical procedure?");
    ASSERT_EQ(r.flags.size(), 1u);
    EXPECT_EQ(r.flags[0].record_id, "synthssg/train/000002");
}

TEST(Golden, SarVqa) {
    const auto read = read_annotations_csv(kFixtures / "sar" / "annotations.csv", AnnotationKind::SarRarp50);
    const auto built = build_action_vqa(read.annotations);
    expect_golden(built, "sar_vqa");
    const auto counts = expected_counts()["sar_vqa"];
    EXPECT_EQ(built.rejections.size() + read.rejections.size(), counts["rejected"].get<std::size_t>());
    EXPECT_EQ(built.records.size() + built.rejections.size() + read.rejections.size(),
              counts["input"].get<std::size_t>());
}

TEST(Golden, CholecT50PhaseAndTriplet) {
    const auto phase = build_cholect50(true);
    const auto triplet = build_cholect50(false);
    expect_golden(phase, "cholect50_phase");
    expect_golden(triplet, "cholect50_triplet");
    const auto counts = expected_counts();
    for (const auto* r : {&phase, &triplet}) {
        const auto c = counts[std::string(to_string(r->records.front().source_dataset))];
        EXPECT_EQ(select_split(r->records, Split::Train).size(), c["train"].get<std::size_t>());
        EXPECT_EQ(select_split(r->records, Split::Test).size(), c["test"].get<std::size_t>());
        EXPECT_EQ(r->rejections.size(), c["rejected"].get<std::size_t>());
    }
}

TEST(Golden, SurgToolLoc) {
    const auto read = read_annotations_csv(kFixtures / "surgtoolloc" / "annotations.csv", AnnotationKind::SurgToolLoc);
    const auto built = build_tool_vqa(read.annotations);
    expect_golden(built, "surgtoolloc");
    EXPECT_EQ(built.rejections.size() + read.rejections.size(),
              expected_counts()["surgtoolloc"]["rejected"].get<std::size_t>());
}

TEST(Golden, SynthSsg) {
    const auto raw = read_raw_items(kFixtures / "synthssg" / "items.json");
    const auto built = ingest_synthssg(synthssg_items(raw, Split::Train));
    expect_golden(built, "synthssg");
    const auto c = expected_counts()["synthssg"];
    EXPECT_EQ(built.rejections.size(), c["rejected"].get<std::size_t>());
    EXPECT_EQ(built.flags.size(), c["flagged"].get<std::size_t>());
}

TEST(TextQa, MedMcqaSurgeryFixtureKeeps37) {
    const auto raw = read_raw_items(kFixtures / "medmcqa" / "items.jsonl");
    ASSERT_EQ(raw.size(), 100u);
    const auto r = filter_medmcqa_surgery(raw, SurgeryPredicate{}, Split::Test);
    EXPECT_EQ(r.records.size(), 37u);
    EXPECT_EQ(r.excluded_count(), 63u);
    for (const auto& rec : r.records) {
        const auto& gold = r.gold.at(rec.id);
        const std::string letter = gold["answer"];
        EXPECT_EQ(rec.answer().substr(0, 3), letter + ". ");
        EXPECT_NE(rec.question().find("\nA. option"), std::string::npos);
    }
}

TEST(TextQa, SurgeryPredicate) {
    SurgeryPredicate p;
    EXPECT_TRUE(p.matches({{"subject_name", "Surgery"}}));
    EXPECT_FALSE(p.matches({{"subject_name", "Psychiatry"}, {"topic_name", "Depression"}}));
    p.topic_keywords = {"surgical"};
    EXPECT_TRUE(p.matches({{"subject_name", "Anatomy"}, {"topic_name", "Surgical anatomy"}}));
}

TEST(TextQa, MissingCopIsRejected) {
    std::vector<RawItem> items{{1, {{"question", "q"}, {"opa", "a"}, {"opb", "b"}, {"opc", "c"}, {"opd", "d"},
                                    {"subject_name", "Surgery"}}, {}}};
    const auto r = filter_medmcqa_surgery(items, SurgeryPredicate{}, Split::Test);
    EXPECT_TRUE(r.records.empty());
    ASSERT_EQ(r.rejections.size(), 1u);
    EXPECT_FALSE(r.rejections[0].excluded);
    EXPECT_NE(r.rejections[0].reason.find("line 1"), std::string::npos);
}

TEST(TextQa, SourcesMapToRecords) {
    const auto counts = expected_counts();
    const std::pair<SourceDataset, const char*> files[] = {
        {SourceDataset::MedQa, "medqa.jsonl"},
        {SourceDataset::Flashcards, "flashcards.json"},
        {SourceDataset::MedInstruct, "medinstruct.json"},
        {SourceDataset::SurgTbQa, "surgtb_qa.jsonl"},
    };
    for (const auto& [source, file] : files) {
        const auto r = ingest_text_qa(source, read_raw_items(kFixtures / "text" / file), Split::Train);
        const auto c = counts[std::string(to_string(source))];
        EXPECT_EQ(r.records.size(), c["records"].get<std::size_t>()) << file;
        EXPECT_EQ(r.excluded_count(), c["excluded"].get<std::size_t>()) << file;
        EXPECT_EQ(r.rejections.size() - r.excluded_count(), c["rejected"].get<std::size_t>()) << file;
        for (const auto& rec : r.records) EXPECT_FALSE(rec.image_ref.has_value());
    }
}

TEST(TextQa, MedQaFormatting) {
    const auto r = ingest_text_qa(SourceDataset::MedQa, read_raw_items(kFixtures / "text" / "medqa.jsonl"), Split::Train);
    ASSERT_GE(r.records.size(), 2u);
    EXPECT_EQ(r.records[0].question(),
              "A 45-year-old presents with right upper quadrant pain. Most likely diagnosis?\n"
              "A. Cholecystitis B. Appendicitis C. Pancreatitis D. Gastritis");
    EXPECT_EQ(r.records[0].answer(), "A. Cholecystitis");
    EXPECT_EQ(r.gold.at(r.records[1].id)["options"].size(), 5u);
}

TEST(TextQa, FlashcardsAndInstructions) {
    const auto f = ingest_text_qa(SourceDataset::Flashcards,
                                  read_raw_items(kFixtures / "text" / "flashcards.json"), Split::Train);
    EXPECT_EQ(f.records[0].question(), "What is McBurney's point?");
    EXPECT_EQ(f.records[0].answer(), "One third of the way from the ASIS to the umbilicus.");
    const auto m = ingest_text_qa(SourceDataset::MedInstruct,
                                  read_raw_items(kFixtures / "text" / "medinstruct.json"), Split::Train);
    EXPECT_EQ(m.records[0].question(), "Summarize the indications for appendectomy.");
    EXPECT_EQ(m.records[1].question(), "Classify the wound.\n\nClean incision, no contamination.");
}

TEST(Manifest, CleanRecordsGiveEmptyReport) {
    const auto read = read_annotations_csv(kFixtures / "sar" / "annotations.csv", AnnotationKind::SarRarp50);
    const auto records = select_split(build_action_vqa(read.annotations).records, Split::Train);
    const auto m = make_manifest(SourceDataset::SarVqa, Split::Train, records);
    EXPECT_TRUE(validate_manifest(records, m).empty());
    EXPECT_EQ(parse_manifest(serialize_manifest(m)), m);
}

TEST(Manifest, DetectsDriftDuplicatesCountAndHash) {
    auto a = frame("v", "1");
    a.phase = "preparation";
    auto b = frame("v", "2");
    b.phase = "preparation";
    auto records = build_phase_vqa({a, b}).records;
    const auto m = make_manifest(SourceDataset::Cholect50Phase, Split::Train, records);

    auto drift = records;
    drift[1].turns[0].text = "What is the phase?";
    auto findings = validate_manifest(drift, m);
    EXPECT_EQ(std::count_if(findings.begin(), findings.end(),
                            [](const Finding& f) { return f.kind == FindingKind::TemplateDrift; }),
              1);

    auto dup = records;
    dup[1].id = dup[0].id;
    findings = validate_manifest(dup, m);
    EXPECT_EQ(std::count_if(findings.begin(), findings.end(),
                            [](const Finding& f) { return f.kind == FindingKind::DuplicateId; }),
              1);

    auto fewer = records;
    fewer.pop_back();
    findings = validate_manifest(fewer, m);
    EXPECT_TRUE(std::any_of(findings.begin(), findings.end(),
                            [](const Finding& f) { return f.kind == FindingKind::CountMismatch; }));
    EXPECT_TRUE(std::any_of(findings.begin(), findings.end(),
                            [](const Finding& f) { return f.kind == FindingKind::HashMismatch; }));
}
