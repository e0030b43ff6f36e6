#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "dnaeval/cli.hpp"
#include "dnaeval/metrics.hpp"
#include "dnaeval/pipeline.hpp"
#include "fixtures.hpp"

using namespace dnaeval;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

void write_script(const MockScript& script, const fs::path& path) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& r : script.rules) {
        nlohmann::json j = {{"contains", r.patterns}, {"reply", r.reply}};
        if (r.input_tokens) j["input_tokens"] = *r.input_tokens;
        if (r.output_tokens) j["output_tokens"] = *r.output_tokens;
        rules.push_back(j);
    }
    testkit::write_text(path, nlohmann::json{{"rules", rules}, {"default_reply", script.default_reply}}.dump());
}

// A synthetic dataset plus its mock script on disk.
struct Workspace {
    testkit::TempDir dir;
    Dataset ds = testkit::synthetic_dataset(6);
    fs::path data = dir / "synthetic.jsonl";
    fs::path script = dir / "script.json";
    fs::path out = dir / "out";

    Workspace() {
        save_canonical(ds, data);
        write_script(testkit::synthetic_script(ds, 3), script);
    }
    fs::path run_file(const std::string& method) const { return out / ("synthetic." + method + ".mock.jsonl"); }
};

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(cli({}).code, kExitUsage);
    EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(cli({"run"}).code, kExitUsage);
    EXPECT_EQ(cli({"run", "x.jsonl", "--method", "bogus"}).code, kExitUsage);
    EXPECT_EQ(cli({"weights", "r.jsonl", "--tie-penalty", "2"}).code, kExitUsage);
    const auto help = cli({"--help"});
    EXPECT_EQ(help.code, kExitOk);
    EXPECT_NE(help.out.find("import"), std::string::npos);
}

TEST(Cli, ImportUnknownFormatIsUsageError) {
    testkit::TempDir dir;
    const auto r = cli({"import", "nope", dir.path().string(), (dir / "o.jsonl").string()});
    EXPECT_EQ(r.code, kExitUsage);
    EXPECT_NE(r.err.find("UnknownFormat"), std::string::npos);
}

TEST(Cli, ImportWritesCanonicalFile) {
    testkit::TempDir dir;
    testkit::write_faireval_release(dir / "fe");
    const auto out = dir / "faireval.jsonl";
    const auto r = cli({"import", "faireval", (dir / "fe").string(), out.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_EQ(r.out, "80 instances\n");
    EXPECT_EQ(load_canonical(out).size(), 80u);
}

TEST(Cli, ImportMtBenchNeedsSeed) {
    testkit::TempDir dir;
    testkit::write_mtbench_release(dir / "mt");
    EXPECT_EQ(cli({"import", "mtbench400", (dir / "mt").string(), (dir / "m.jsonl").string()}).code, kExitRuntime);
    const auto r = cli({"import", "mtbench400", (dir / "mt").string(), (dir / "m.jsonl").string(), "--seed", "3"});
    EXPECT_EQ(r.out, "400 instances\n");
}

TEST(Cli, RunReportWeightsCost) {
    Workspace ws;
    testkit::write_text(ws.dir / "prices.json", R"({"mock": {"input": 0.5, "output": 2}})");
    const auto run = cli({"run", ws.data.string(), "--mock", ws.script.string(), "--out", ws.out.string(),
                          "--prices", (ws.dir / "prices.json").string()});
    ASSERT_EQ(run.code, kExitOk) << run.err;
    EXPECT_NE(run.out.find("6 records, 30 inferences (0 cached)"), std::string::npos) << run.out;
    EXPECT_NE(run.out.find("0 excluded"), std::string::npos);
    EXPECT_NE(run.out.find("provider calls: 30"), std::string::npos);
    ASSERT_TRUE(fs::exists(ws.run_file("dna")));

    // Input tokens 5 * (100 + ... + 105) = 3075, output 6 * 60 = 360.
    const double expected = 3075 * 0.5 + 360 * 2.0;
    std::ostringstream line;
    line << "cost: " << expected << " / 30";
    EXPECT_NE(run.out.find(line.str()), std::string::npos) << run.out;

    const auto rep = cli({"report", ws.run_file("dna").string(), ws.data.string()});
    ASSERT_EQ(rep.code, kExitOk) << rep.err;
    EXPECT_TRUE(fs::exists(ws.out / "synthetic.dna.mock.agreement.csv"));
    EXPECT_TRUE(fs::exists(ws.out / "synthetic.dna.mock.agreement.txt"));
    const auto result = load_run(ws.run_file("dna"));
    const auto cell = agreement_cell(result, ws.ds);
    EXPECT_EQ(rep.out, format_percent(cell.with_ties) + " " + format_percent(cell.without_ties) + "\n");

    const auto cost = cli({"cost", ws.run_file("dna").string(), "--prices", (ws.dir / "prices.json").string()});
    ASSERT_EQ(cost.code, kExitOk) << cost.err;
    EXPECT_NE(cost.out.find("dna mock:"), std::string::npos);

    const auto w = cli({"weights", ws.run_file("dna").string()});
    ASSERT_EQ(w.code, kExitOk) << w.err;
    EXPECT_TRUE(fs::exists(ws.out / "synthetic.dna.mock.weights.csv"));
    EXPECT_NE(w.out.find("writing"), std::string::npos);
}

TEST(Cli, CostWithoutPriceForModelFails) {
    Workspace ws;
    ASSERT_EQ(cli({"run", ws.data.string(), "--mock", ws.script.string(), "--out", ws.out.string()}).code, kExitOk);
    testkit::write_text(ws.dir / "prices.json", R"({"other": {"input": 1, "output": 1}})");
    const auto r = cli({"cost", ws.run_file("dna").string(), "--prices", (ws.dir / "prices.json").string()});
    EXPECT_EQ(r.code, kExitRuntime);
    EXPECT_NE(r.err.find("UnknownModelPrice"), std::string::npos);
}

TEST(Cli, RerunFromCacheIsIdenticalAndFree) {
    Workspace ws;
    const auto cache = (ws.dir / "cache.jsonl").string();
    const std::vector<std::string> args{"run", ws.data.string(), "--mock", ws.script.string(), "--out",
                                        ws.out.string(), "--cache", cache};
    ASSERT_EQ(cli(args).code, kExitOk);
    const auto first = testkit::read_text(ws.run_file("dna"));
    const auto again = cli(args);
    ASSERT_EQ(again.code, kExitOk);
    EXPECT_NE(again.out.find("provider calls: 0"), std::string::npos) << again.out;
    EXPECT_EQ(testkit::read_text(ws.run_file("dna")), first);
}

TEST(Cli, WeightsAgainstReference) {
    Workspace ws;
    ASSERT_EQ(cli({"run", ws.data.string(), "--mock", ws.script.string(), "--out", ws.out.string()}).code, kExitOk);
    // Instance 0 weights 50/30/20 (ranks 1 2 3); instance 1 weights 20/30/50 (ranks 3 2 1).
    testkit::write_text(ws.dir / "ref.jsonl",
                        "{\"instance_id\":\"syn-case-00\",\"ranks\":[1,2,3]}\n"
                        "{\"instance_id\":\"syn-case-01\",\"ranks\":[1,2,3]}\n");
    const auto r = cli({"weights", ws.run_file("dna").string(), "--reference", (ws.dir / "ref.jsonl").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("synthetic mean normalized distance 0.500 over 2 instances"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(ws.out / "synthetic.dna.mock.kendall.csv"));

    ASSERT_EQ(cli({"run", ws.data.string(), "--method", "direct", "--mock", ws.script.string(), "--out",
                   ws.out.string()})
                  .code,
              kExitOk);
    const auto bad = cli({"weights", ws.run_file("direct").string(), "--reference", (ws.dir / "ref.jsonl").string()});
    EXPECT_EQ(bad.code, kExitRuntime);
    EXPECT_NE(bad.err.find("records without weights: syn-case-00 syn-case-01"), std::string::npos) << bad.err;
}

TEST(Cli, ReportOptions) {
    Workspace ws;
    testkit::write_text(ws.dir / "broken.json", R"({"default_reply": "Assistant 1: 5\nAssistant 2: 5"})");
    ASSERT_EQ(cli({"run", ws.data.string(), "--method", "direct", "--mock", (ws.dir / "broken.json").string(),
                   "--out", ws.out.string()})
                  .code,
              kExitOk);
    // Every prediction is a tie: gold ties agree (2 of 6), no non-tie gold does.
    const auto strict = cli({"report", ws.run_file("direct").string(), ws.data.string()});
    EXPECT_EQ(strict.out, "33.3 0.0\n");
    const auto lenient = cli({"report", ws.run_file("direct").string(), ws.data.string(), "--lenient-ties"});
    EXPECT_EQ(lenient.out, "33.3 \xE2\x80\x94\n");
}

TEST(Cli, ExcludedRecordsAndDropFlag) {
    Workspace ws;
    testkit::write_text(ws.dir / "mute.json", R"({"default_reply": "no idea"})");
    const auto run = cli({"run", ws.data.string(), "--method", "direct", "--mock", (ws.dir / "mute.json").string(),
                          "--out", ws.out.string()});
    ASSERT_EQ(run.code, kExitOk);
    EXPECT_NE(run.out.find("12 inferences"), std::string::npos) << run.out;
    EXPECT_NE(run.out.find("6 excluded"), std::string::npos);
    EXPECT_EQ(cli({"report", ws.run_file("direct").string(), ws.data.string()}).out, "0.0 0.0\n");
    EXPECT_EQ(cli({"report", ws.run_file("direct").string(), ws.data.string(), "--drop-excluded"}).out,
              "\xE2\x80\x94 \xE2\x80\x94\n");
}

TEST(Cli, MissingCredentialsIsRuntimeError) {
    Workspace ws;
    ::unsetenv("OPENAI_API_KEY");
    const auto r = cli({"run", ws.data.string(), "--backend", "openai", "--out", ws.out.string()});
    EXPECT_EQ(r.code, kExitRuntime);
    EXPECT_NE(r.err.find("AuthError"), std::string::npos);
}

TEST(Cli, ConfigFile) {
    Workspace ws;
    testkit::write_text(ws.dir / "run.toml", "[run]\nmethod = \"direct\"\nmock = \"" + ws.script.string() + "\"\nout = \"" +
                                                 ws.out.string() + "\"\n");
    const auto r = cli({"--config", (ws.dir / "run.toml").string(), "run", ws.data.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_TRUE(fs::exists(ws.run_file("direct")));
}
