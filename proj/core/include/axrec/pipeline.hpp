#pragma once

#include <json.hpp>

#include "axrec/acquisition.hpp"
#include "axrec/diffusion.hpp"
#include "axrec/metrics.hpp"

namespace axrec {

enum class Method { microdiffusion, naive_diffusion, inr_only, linear, cubic };

Method method_from_string(const std::string& s);
std::string to_string(Method m);

struct EncodingConfig {
    std::string type = "gaussian";  // gaussian | sincos
    int out_dim = 256;
    double sigma = 10.0;
    int num_frequencies = 10;
    bool include_input = false;

    Encoding build(std::uint64_t seed) const;
};

struct ExperimentConfig {
    int schema_version = 1;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    Method method = Method::microdiffusion;
    bool verbose = true;

    PhantomSpec phantom;
    AcquisitionConfig acquisition;
    EncodingConfig encoding;
    InrTrainConfig inr;

    struct ScheduleConfig {
        int T = 1000;
        double beta_start = 1e-4;
        double beta_end = 2e-2;
    } schedule;
    DiffusionTrainConfig diffusion_train;
    GuidanceConfig guidance;
    int unet_base_channels = 16;
    int unet_time_embed_dim = 64;
    CondEncoderConfig cond;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    void validate() const;
    std::uint64_t config_hash() const;
};

enum class Stage { phantom, acquire, train_inr, train_diff, reconstruct, evaluate };
Stage stage_from_string(const std::string& s);

// Executes stages up to `through`, persisting every artifact under
// output_dir. Stages whose artifacts already exist under an identical
// config hash are skipped (a skip line is logged). Returns the metric
// report when `through` == evaluate, otherwise an empty report.
MetricReport run_pipeline(const ExperimentConfig& cfg, Stage through = Stage::evaluate);

struct SweepRow {
    double value = 0.0;
    bool ok = false;
    std::string error;
    MetricReport report;
};

// Runs the pipeline once per value of the swept axis (step_length, gamma,
// or w); emits sweep.csv plus one line-plot PNG per metric under
// base.output_dir. Per-run failures are recorded and the sweep continues.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<double>& values);

// Built-in method presets (one per reconstruction method).
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

}  // namespace axrec
