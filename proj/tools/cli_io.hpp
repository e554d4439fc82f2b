#pragma once

#include "vibro/builtin_systems.hpp"
#include "vibro/integrator.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace vibro::cli {

using nlohmann::json;

struct RunConfig {
    std::string path;
    std::string system;
    ParamMap params;  // overrides only
    double mu = 0.0;
    double theta = 0.0;
    IntegratorConfig integrator;
    json raw;
};

// Throws VibroError(invalid_argument) on a malformed file.
[[nodiscard]] RunConfig load_config(const std::string& path);

[[nodiscard]] json integrator_to_json(const IntegratorConfig& cfg);
[[nodiscard]] json vec_to_json(const Vec& v);
[[nodiscard]] json mat_to_json(const Mat& m);

// Comma separated list of numbers.
[[nodiscard]] Vec parse_vector(const std::string& text);

// Tracks written files and produces the manifest last.
class RunOutput {
public:
    RunOutput(std::string command, std::filesystem::path dir);

    [[nodiscard]] const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path file(const std::string& name);
    void write_json(const std::string& name, const json& j);
    void set_config(const std::string& path, json resolved);
    void finish();

private:
    std::string command_;
    std::filesystem::path dir_;
    std::vector<std::string> files_;
    std::string config_path_;
    json resolved_;
    std::chrono::steady_clock::time_point start_;
};

// Full precision CSV writer.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(const std::string& v);
    CsvWriter& operator<<(const Vec& v);
    void end_row();

private:
    void sep();
    std::ofstream out_;
    bool first_ = true;
};

// Default output directory: --out, else $VIBRO_OUT_ROOT/<command>, else runs/<command>.
[[nodiscard]] std::filesystem::path output_dir(const std::string& flag, const std::string& command);

[[nodiscard]] std::string format_double(double v);

extern const char* const kToolVersion;

}  // namespace vibro::cli
