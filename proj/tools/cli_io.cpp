#include "cli_io.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace vibro::cli {

const char* const kToolVersion = "0.1.0";

namespace {

double number(const json& j, const std::string& key) {
    if (!j.is_number()) throw VibroError(ErrorKind::invalid_argument, "config key '" + key + "' must be a number");
    return j.get<double>();
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw VibroError(ErrorKind::invalid_argument, "cannot open config " + path);
    RunConfig rc;
    rc.path = path;
    try {
        rc.raw = json::parse(in);
    } catch (const json::parse_error& e) {
        throw VibroError(ErrorKind::invalid_argument, std::string("malformed config: ") + e.what());
    }
    if (!rc.raw.is_object()) throw VibroError(ErrorKind::invalid_argument, "config must be a JSON object");
    for (const auto& [key, value] : rc.raw.items()) {
        if (key == "system") {
            if (!value.is_string()) throw VibroError(ErrorKind::invalid_argument, "config key 'system' must be a string");
            rc.system = value.get<std::string>();
        } else if (key == "params") {
            if (!value.is_object()) throw VibroError(ErrorKind::invalid_argument, "config key 'params' must be an object");
            for (const auto& [pk, pv] : value.items()) rc.params[pk] = number(pv, "params." + pk);
        } else if (key == "mu") {
            rc.mu = number(value, key);
        } else if (key == "theta") {
            rc.theta = number(value, key);
        } else if (key == "integrator") {
            if (!value.is_object()) throw VibroError(ErrorKind::invalid_argument, "config key 'integrator' must be an object");
            IntegratorConfig& c = rc.integrator;
            for (const auto& [ik, iv] : value.items()) {
                const double v = number(iv, "integrator." + ik);
                if (ik == "rel_tol") c.rel_tol = v;
                else if (ik == "abs_tol") c.abs_tol = v;
                else if (ik == "event_tol") c.event_tol = v;
                else if (ik == "chatter_velocity_floor") c.chatter_velocity_floor = v;
                else if (ik == "chatter_max_impacts") c.chatter_max_impacts = static_cast<int>(v);
                else if (ik == "contact_tol") c.contact_tol = v;
                else if (ik == "max_step") c.max_step = v;
                else if (ik == "section_guard") c.section_guard = v;
                else throw VibroError(ErrorKind::invalid_argument, "unknown integrator key '" + ik + "'");
            }
        } else {
            throw VibroError(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
        }
    }
    if (rc.system.empty()) throw VibroError(ErrorKind::invalid_argument, "config lacks 'system'");
    rc.integrator.validate();
    return rc;
}

json integrator_to_json(const IntegratorConfig& c) {
    return {{"rel_tol", c.rel_tol},
            {"abs_tol", c.abs_tol},
            {"event_tol", c.event_tol},
            {"chatter_velocity_floor", c.chatter_velocity_floor},
            {"chatter_max_impacts", c.chatter_max_impacts},
            {"contact_tol", c.contact_tol},
            {"max_step", c.max_step},
            {"section_guard", c.section_guard}};
}

json vec_to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json mat_to_json(const Mat& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_to_json(m.row(i).transpose()));
    return a;
}

Vec parse_vector(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        const char* b = item.data();
        while (*b == ' ') ++b;
        const auto res = std::from_chars(b, item.data() + item.size(), v);
        if (res.ec != std::errc()) throw VibroError(ErrorKind::invalid_argument, "bad number '" + item + "'");
        vals.push_back(v);
    }
    return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::filesystem::path output_dir(const std::string& flag, const std::string& command) {
    if (!flag.empty()) return flag;
    if (const char* root = std::getenv("VIBRO_OUT_ROOT"); root && *root) return std::filesystem::path(root) / command;
    return std::filesystem::path("runs") / command;
}

RunOutput::RunOutput(std::string command, std::filesystem::path dir)
    : command_(std::move(command)), dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
    std::filesystem::create_directories(dir_);
    std::filesystem::remove(dir_ / "manifest.json");
}

std::filesystem::path RunOutput::file(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
}

void RunOutput::write_json(const std::string& name, const json& j) {
    std::ofstream out(file(name));
    out << j.dump(2) << '\n';
    if (!out) throw VibroError(ErrorKind::invalid_argument, "cannot write " + name);
}

void RunOutput::set_config(const std::string& path, json resolved) {
    config_path_ = path;
    resolved_ = std::move(resolved);
}

void RunOutput::finish() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"command", command_},
              {"config", config_path_},
              {"resolved", resolved_},
              {"output_dir", dir_.string()},
              {"tool_version", kToolVersion},
              {"wall_clock_seconds", secs},
              {"files", files_}};
    const auto tmp = dir_ / "manifest.json.tmp";
    {
        std::ofstream out(tmp);
        out << m.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, dir_ / "manifest.json");
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw VibroError(ErrorKind::invalid_argument, "cannot write " + path.string());
    for (const auto& h : header) *this << h;
    end_row();
}

void CsvWriter::sep() {
    if (!first_) out_ << ',';
    first_ = false;
}

CsvWriter& CsvWriter::operator<<(double v) {
    sep();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(const std::string& v) {
    sep();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) *this << v(i);
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

}  // namespace vibro::cli
