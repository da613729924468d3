#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "modir/commands.hpp"
#include "modir/projection.hpp"

using namespace modir;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("modir_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::istringstream in(slurp(p));
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

RunConfig small_run_config() {
    RunConfig c;
    c.data.queries_per_domain = 64;
    c.data.docs_per_domain = 512;
    c.data.item_spread = 1.0;
    c.data.noise_sigma = 0.02;
    c.train.batch_size = 8;
    c.train.encoder_dims = {32, 24, 16};
    c.train.total_steps = 40;
    c.train.warmup_steps = 10;
    c.train.eval_every = 10;
    c.train.mining_refresh_steps = 20;
    c.train.mining_depth = 8;
    c.train.classifier_bias = true;
    c.eval.probe.max_sweeps = 50;
    return c;
}

fs::path write_config(const fs::path& dir, const RunConfig& c) {
    const fs::path p = dir / "run_config.json";
    std::ofstream(p) << to_json(c).dump(2);
    return p;
}

CommandOptions opts(const fs::path& config, std::optional<fs::path> out) {
    CommandOptions o;
    o.config = config;
    o.out = out;
    return o;
}

}  // namespace

TEST_CASE("defaults parse back") {
    std::ostringstream s;
    cmd_defaults(s);
    const auto c = run_config_from_json(nlohmann::json::parse(s.str()));
    CHECK(to_json(c).dump() == to_json(RunConfig{}).dump());
}

TEST_CASE("config schema checks") {
    auto j = nlohmann::json::parse(to_json(RunConfig{}).dump());
    j.erase("schema_version");
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j["schema_version"] = 2;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j["schema_version"] = 1;
    j["extra"] = nlohmann::json::object();
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    j.erase("extra");
    j["train"]["lr_typo"] = 1;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
    CHECK(run_config_from_json({{"schema_version", 1}}).train.momentum_n == TrainConfig{}.momentum_n);
}

TEST_CASE("format_number") {
    CHECK(format_number(std::nullopt).empty());
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(100.0) == "100");
    CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);
}

TEST_CASE("generate") {
    TempDir tmp("generate");
    const RunConfig rc = small_run_config();
    const auto cfg = write_config(tmp.path, rc);
    std::ostringstream log;
    cmd_generate(opts(cfg, tmp.path / "a"), log);
    cmd_generate(opts(cfg, tmp.path / "b"), log);
    for (const char* f : {kSourceCorpusFile, kTargetCorpusFile, kConfigFile}) {
        CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
    }
    CHECK(lines(tmp.path / "a" / kSourceCorpusFile).size() == 1 + 64 + 512 + 64);
    const auto corpora = load_corpora(tmp.path / "a");
    CHECK(corpora.source.domain() == Domain::Source);
    CHECK(corpora.target.queries().size() == 64);

    // Refuses a non-empty directory without --force.
    CHECK_THROWS_AS(cmd_generate(opts(cfg, tmp.path / "a"), log), ConfigError);
    auto forced = opts(cfg, tmp.path / "a");
    forced.force = true;
    forced.seed = 99;
    cmd_generate(forced, log);
    CHECK(slurp(tmp.path / "a" / kSourceCorpusFile) != slurp(tmp.path / "b" / kSourceCorpusFile));

    RunConfig bad = rc;
    bad.data.feature_dim = 4;
    const auto bad_cfg = tmp.path / "bad.json";
    std::ofstream(bad_cfg) << to_json(bad).dump();
    CHECK_THROWS_AS(cmd_generate(opts(bad_cfg, tmp.path / "c"), log), ConfigError);
    CHECK_THROWS_AS(cmd_generate(CommandOptions{}, log), ConfigError);
}

TEST_CASE("train, eval, project and report") {
    TempDir tmp("pipeline");
    RunConfig rc = small_run_config();
    const auto cfg = write_config(tmp.path, rc);
    std::ostringstream log;
    cmd_generate(opts(cfg, tmp.path / "data"), log);

    const auto last = cmd_train(opts(cfg, tmp.path / "run"), tmp.path / "data", log);
    CHECK(last.step == 40);
    CHECK(lines(tmp.path / "run" / kMetricsFile).size() == 4);
    CHECK(fs::exists(tmp.path / "run" / kCheckpointFile));
    CHECK(fs::exists(tmp.path / "run" / kCorporaFile));
    CHECK(load_run_config(tmp.path / "run" / kConfigFile).train.total_steps == 40);
    CHECK(last.global_domain_acc.has_value());
    CHECK(last.ndcg_target.has_value());

    SUBCASE("train refuses a non-empty run directory and missing corpora") {
        CHECK_THROWS_AS(cmd_train(opts(cfg, tmp.path / "run"), tmp.path / "data", log), ConfigError);
        CHECK_THROWS(cmd_train(opts(cfg, tmp.path / "run2"), tmp.path / "missing", log));
    }

    SUBCASE("eval is repeatable and echoes k") {
        RunConfig e = rc;
        e.eval.ndcg_k = 5;
        const auto ecfg = tmp.path / "eval_config.json";
        std::ofstream(ecfg) << to_json(e).dump();
        std::ostringstream a, b;
        const auto ra = cmd_eval(opts(ecfg, tmp.path / "eval"), tmp.path / "run" / kCheckpointFile,
                                 tmp.path / "data", a);
        cmd_eval(opts(ecfg, {}), tmp.path / "run" / kCheckpointFile, tmp.path / "data", b);
        CHECK(a.str() == b.str());
        CHECK(ra.ndcg_k == 5);
        CHECK(slurp(tmp.path / "eval" / kEvalFile) == a.str());
        CHECK(ra.step == 40);
    }

    SUBCASE("eval rejects corpora of another feature dimension") {
        RunConfig other = rc;
        other.data.feature_dim = 16;
        const auto ocfg = tmp.path / "other.json";
        std::ofstream(ocfg) << to_json(other).dump();
        cmd_generate(opts(ocfg, tmp.path / "data16"), log);
        CHECK_THROWS_AS(cmd_eval(opts(cfg, {}), tmp.path / "run" / kCheckpointFile, tmp.path / "data16", log),
                        ConfigError);
    }

    SUBCASE("project") {
        cmd_project(opts(cfg, tmp.path / "proj"), tmp.path / "run" / kCheckpointFile, tmp.path / "data", log);
        const auto rows = lines(tmp.path / "proj" / kProjectionFile);
        REQUIRE(rows.size() == 1 + 2 * (64 + 512));
        CHECK(rows[0] == "id,role,domain,pc1,pc2");
        CHECK(rows[1].find(",query,source,") != std::string::npos);
        CHECK(rows.back().find(",doc,target,") != std::string::npos);
    }

    SUBCASE("report") {
        cmd_report(CommandOptions{}, tmp.path / "run", log);
        const auto acc = lines(tmp.path / "run" / kDomainAccCsv);
        const auto inv = lines(tmp.path / "run" / kInvarianceCsv);
        REQUIRE(acc.size() == 5);
        CHECK(acc[0] == "step,global,local");
        CHECK(inv[0] == "step,knn_source_pct,target_ndcg,source_ndcg");
        CHECK(acc[1].rfind("10,", 0) == 0);
        CHECK(acc[4].rfind("40,", 0) == 0);
        // No classifier during warmup: the local column is empty.
        CHECK(acc[1].back() == ',');

        // Rows come out sorted even when the metrics file is not.
        auto m = lines(tmp.path / "run" / kMetricsFile);
        std::reverse(m.begin(), m.end());
        fs::create_directories(tmp.path / "shuffled");
        std::ofstream shuffled(tmp.path / "shuffled" / kMetricsFile);
        for (const auto& l : m) shuffled << l << '\n';
        shuffled.close();
        cmd_report(CommandOptions{}, tmp.path / "shuffled", log);
        CHECK(lines(tmp.path / "shuffled" / kDomainAccCsv) == acc);

        fs::create_directories(tmp.path / "empty");
        std::ofstream(tmp.path / "empty" / kMetricsFile).close();
        CHECK_THROWS_AS(cmd_report(CommandOptions{}, tmp.path / "empty", log), ConfigError);
    }

    SUBCASE("resume continues a truncated run byte-identically") {
        const std::string full = slurp(tmp.path / "run" / kMetricsFile);
        const auto corpora = load_corpora(tmp.path / "data");
        Trainer t(rc.train, corpora.source, corpora.target.collection);
        const auto head = t.run(20);
        fs::create_directories(tmp.path / "mid");
        fs::copy_file(tmp.path / "run" / kConfigFile, tmp.path / "mid" / kConfigFile);
        write_checkpoint(head.final_checkpoint, tmp.path / "mid" / kCheckpointFile);
        const auto all = lines(tmp.path / "run" / kMetricsFile);
        std::ofstream m(tmp.path / "mid" / kMetricsFile);
        // Includes a stale row past the checkpoint that resume must drop.
        for (std::size_t i = 0; i < 3; ++i) m << all[i] << '\n';
        m.close();
        cmd_resume(tmp.path / "mid", tmp.path / "data", log);
        CHECK(slurp(tmp.path / "mid" / kMetricsFile) == full);
        CHECK(slurp(tmp.path / "mid" / kCheckpointFile) == slurp(tmp.path / "run" / kCheckpointFile));
    }
}

TEST_CASE("baseline run leaves adversarial columns empty") {
    TempDir tmp("baseline");
    RunConfig rc = small_run_config();
    rc.train.mode = TrainMode::Baseline;
    const auto cfg = write_config(tmp.path, rc);
    std::ostringstream log;
    cmd_generate(opts(cfg, tmp.path / "data"), log);
    const auto last = cmd_train(opts(cfg, tmp.path / "run"), tmp.path / "data", log);
    CHECK_FALSE(last.global_domain_acc.has_value());
    CHECK_FALSE(last.local_domain_acc.has_value());
    const auto j = nlohmann::json::parse(lines(tmp.path / "run" / kMetricsFile).back());
    CHECK(j.at("mode") == "baseline");
    CHECK(j.at("adversarial_loss").is_null());
    CHECK(j.at("lambda").is_null());
    cmd_report(CommandOptions{}, tmp.path / "run", log);
    for (const auto& row : lines(tmp.path / "run" / kDomainAccCsv)) {
        if (row[0] != 's') CHECK(row.substr(row.find(',')) == ",,");
    }
}

TEST_CASE("gan runs are labeled") {
    TempDir tmp("gan");
    RunConfig rc = small_run_config();
    rc.train.adv_loss = AdvLossKind::Gan;
    rc.train.total_steps = 20;
    const auto cfg = write_config(tmp.path, rc);
    std::ostringstream log;
    cmd_generate(opts(cfg, tmp.path / "data"), log);
    const auto last = cmd_train(opts(cfg, tmp.path / "run"), tmp.path / "data", log);
    CHECK(last.adv_loss == std::optional<std::string>("gan"));
}

TEST_CASE("untrained checkpoint on zero-shift corpora") {
    TempDir tmp("zeroshift");
    RunConfig rc;
    rc.data.shift_magnitude = 0.0;
    // Large enough that sampling noise between the two domains stays small.
    rc.data.queries_per_domain = 1024;
    rc.data.docs_per_domain = 8192;
    const auto cfg = write_config(tmp.path, rc);
    std::ostringstream log;
    cmd_generate(opts(cfg, tmp.path / "data"), log);
    const auto corpora = load_corpora(tmp.path / "data");
    const Trainer t(rc.train, corpora.source, corpora.target.collection);
    write_checkpoint(t.checkpoint(), tmp.path / kCheckpointFile);
    const auto r = cmd_eval(opts(cfg, {}), tmp.path / kCheckpointFile, tmp.path / "data", log);
    CHECK(r.step == 0);
    CHECK(std::abs(*r.ndcg_source - *r.ndcg_target) <= 0.03);
    CHECK(std::abs(*r.global_domain_acc - 50.0) <= 5.0);
}

TEST_CASE("pca of 2-D points is a rigid motion") {
    Rng rng(21);
    std::vector<Vec> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(Vec{3.0 * rng.normal() + 1.0, rng.normal() - 2.0});
    pts.push_back(pts[5]);
    const auto p = pca_2d(pts);
    CHECK(p.variance[0] >= p.variance[1]);
    CHECK(p.coords[200] == p.coords[5]);
    for (int t = 0; t < 100; ++t) {
        const auto i = rng.below(pts.size()), j = rng.below(pts.size());
        const double dx = pts[i][0] - pts[j][0], dy = pts[i][1] - pts[j][1];
        const double ex = p.coords[i][0] - p.coords[j][0], ey = p.coords[i][1] - p.coords[j][1];
        CHECK(std::hypot(ex, ey) == doctest::Approx(std::hypot(dx, dy)).epsilon(1e-9));
    }
    double m0 = 0.0, m1 = 0.0;
    for (const auto& c : p.coords) {
        m0 += c[0];
        m1 += c[1];
    }
    CHECK(std::abs(m0) < 1e-9);
    CHECK(std::abs(m1) < 1e-9);
    CHECK_THROWS_AS(pca_2d({Vec{1, 2}, Vec{3, 4}}), ConfigError);
    CHECK_THROWS_AS(pca_2d({Vec{1}, Vec{2}, Vec{3}}), ConfigError);
}

TEST_CASE("pca orders components by variance in higher dimensions") {
    Rng rng(22);
    std::vector<Vec> pts;
    for (int i = 0; i < 500; ++i) pts.push_back(Vec{0.5 * rng.normal(), 4.0 * rng.normal(), 0.1 * rng.normal(), 2.0 * rng.normal()});
    const auto p = pca_2d(pts);
    CHECK(std::abs(p.components[0][1]) > 0.99);
    CHECK(std::abs(p.components[1][3]) > 0.99);
    CHECK(p.components[0][1] > 0.0);
    CHECK(p.variance[0] == doctest::Approx(16.0).epsilon(0.15));
}
