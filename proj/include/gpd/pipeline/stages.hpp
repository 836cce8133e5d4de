#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "gpd/errors.hpp"
#include "gpd/pipeline/bundle.hpp"
#include "gpd/pipeline/config.hpp"

namespace gpd::pipeline {

enum class Stage { data, spgd, rrae_geometry, rrae_spatial, rrae_m1, rrae_m2, table, regressors, gmm, bundle };
inline constexpr std::array<Stage, 10> kStages = {Stage::data,         Stage::spgd,    Stage::rrae_geometry,
                                                  Stage::rrae_spatial, Stage::rrae_m1, Stage::rrae_m2,
                                                  Stage::table,        Stage::regressors, Stage::gmm,
                                                  Stage::bundle};
const char* to_string(Stage s);
Stage stage_for(Model m);

/// A stage failure: the message carries the stage name, the artifact path
/// and the underlying error kind.
class StageError : public Error {
public:
    StageError(Stage stage, const std::filesystem::path& artifact, const Error& cause);
    StageError(Stage stage, const std::filesystem::path& artifact, const std::string& what);
    const char* kind() const noexcept override { return "stage"; }
    Stage stage() const { return stage_; }

private:
    Stage stage_;
};

struct StageReport {
    Stage stage;
    bool skipped = false;
    double seconds = 0.0;
    std::filesystem::path artifact;
    std::string key;
};

struct RunOptions {
    bool force = false;
    std::function<void(const std::string&)> log;
};

/// Offline stages over one output directory. Each stage writes one GPDC
/// artifact plus a sidecar "<artifact>.key" holding the SHA-256 of its
/// config subsection and upstream artifact hashes, then the artifact's own
/// hash; a stage is skipped when both match, unless forced.
class Pipeline {
public:
    Pipeline(PipelineConfig config, std::filesystem::path out_dir, RunOptions options = {});

    const PipelineConfig& config() const { return config_; }
    const std::filesystem::path& out_dir() const { return out_; }
    std::filesystem::path artifact(Stage s) const;

    /// Brings the upstream stages up to date (cached or not), then runs or
    /// skips `s`. With `force`, only `s` itself is forced. Reports follow
    /// stage order, `s` last.
    std::vector<StageReport> run(Stage s);
    /// Every stage in order; `force` reruns all of them.
    std::vector<StageReport> run_all();

    /// Key the stage would be stored under. Upstream artifacts must exist.
    std::string cache_key(Stage s) const;
    bool up_to_date(Stage s) const;

    ModelBundle load_bundle() const;

private:
    StageReport run_one(Stage s, bool force);
    void execute(Stage s);
    void stage_data();
    void stage_spgd();
    void stage_rrae(Model m);
    void stage_table();
    void stage_regressors();
    void stage_gmm();
    void stage_bundle();
    void log(const std::string& line) const;

    PipelineConfig config_;
    std::filesystem::path out_;
    RunOptions options_;
};

std::vector<Stage> upstream(Stage s);
/// Stage config subsection that enters its cache key.
nlohmann::json stage_config(const PipelineConfig& c, Stage s);

/// Artifact readers shared by stages, the evaluator and tests.
struct DataArtifact {
    std::vector<microgen::RVEImage> images;  // train rows first
    std::size_t train_count = 0;
};
DataArtifact read_data(const std::filesystem::path& path);

struct SpgdArtifact {
    std::vector<spgd::SeparatedSolution> solutions;  // normalized, train rows first
    spgd::GlobalNormalization normalization;
    std::vector<double> train_mape;
    std::vector<double> test_mape;
};
SpgdArtifact read_spgd(const std::filesystem::path& path);

/// Held-out reconstruction loss with the frozen basis.
double heldout_loss(const rrae::TrainedRRAE<float>& model, const numkit::Batch<float>& data);

/// First `count` rows starting at `first`.
numkit::Batch<float> rows(const numkit::Batch<float>& b, std::size_t first, std::size_t count);

}  // namespace gpd::pipeline
