#include "ifseg/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "ifseg/error.hpp"

namespace ifseg {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size())
        fail_data("config: key '" + key + "' expects an unsigned integer, got '" + value + "'");
    return out;
}

std::uint32_t parse_u32(const std::string& key, const std::string& value) {
    std::uint64_t v = parse_u64(key, value);
    if (v > 0xffffffffULL) fail_data("config: key '" + key + "' value too large");
    return static_cast<std::uint32_t>(v);
}

double parse_f64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        fail_data("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

std::string format_f64(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

void RunConfig::validate() const {
    require_data(grid_s >= 1, "config: S must be >= 1");
    require_data(h >= 1, "config: H must be >= 1");
    require_data(w >= 1, "config: W must be >= 1");
    require_data(m >= 1 || !categories.empty(), "config: M must be >= 1 (or set categories)");
    require_data(dim >= 1, "config: D must be >= 1");
    require_data(n_layers_enc >= 1, "config: n_layers_enc must be >= 1");
    require_data(n_layers_dec >= 1, "config: n_layers_dec must be >= 1");
    require_data(n_heads >= 1, "config: n_heads must be >= 1");
    require_data(dim % n_heads == 0, "config: D must be divisible by n_heads");
    require_data(ffn_mult >= 1, "config: ffn_mult must be >= 1");
    require_data(lr > 0.0, "config: lr must be > 0");
    require_data(weight_decay >= 0.0, "config: weight_decay must be >= 0");
    require_data(beta1 >= 0.0 && beta1 < 1.0, "config: beta1 must be in [0, 1)");
    require_data(beta2 >= 0.0 && beta2 < 1.0, "config: beta2 must be in [0, 1)");
    require_data(eps > 0.0, "config: eps must be > 0");
    require_data(batch_size >= 1, "config: batch_size must be >= 1");
    require_data(patch_size >= 1, "config: patch_size must be >= 1");
    require_data(k >= 1, "config: K must be >= 1");
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail_data("config: line " + std::to_string(lineno) + " is not 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!seen.insert(key).second)
            fail_data("config: key '" + key + "' given more than once");

        if (key == "seed") cfg.seed = parse_u64(key, value);
        else if (key == "S") cfg.grid_s = parse_u32(key, value);
        else if (key == "H") cfg.h = parse_u32(key, value);
        else if (key == "W") cfg.w = parse_u32(key, value);
        else if (key == "M") cfg.m = parse_u32(key, value);
        else if (key == "categories") cfg.categories = value;
        else if (key == "hierarchy") cfg.hierarchy = value;
        else if (key == "vocab") cfg.vocab = value;
        else if (key == "D") cfg.dim = parse_u32(key, value);
        else if (key == "n_layers_enc") cfg.n_layers_enc = parse_u32(key, value);
        else if (key == "n_layers_dec") cfg.n_layers_dec = parse_u32(key, value);
        else if (key == "n_heads") cfg.n_heads = parse_u32(key, value);
        else if (key == "ffn_mult") cfg.ffn_mult = parse_u32(key, value);
        else if (key == "l_t_max") cfg.l_t_max = parse_u32(key, value);
        else if (key == "lr") cfg.lr = parse_f64(key, value);
        else if (key == "weight_decay") cfg.weight_decay = parse_f64(key, value);
        else if (key == "beta1") cfg.beta1 = parse_f64(key, value);
        else if (key == "beta2") cfg.beta2 = parse_f64(key, value);
        else if (key == "eps") cfg.eps = parse_f64(key, value);
        else if (key == "batch_size") cfg.batch_size = parse_u32(key, value);
        else if (key == "steps") cfg.steps = parse_u32(key, value);
        else if (key == "log_every") cfg.log_every = parse_u32(key, value);
        else if (key == "patch_size") cfg.patch_size = parse_u32(key, value);
        else if (key == "K") cfg.k = parse_u32(key, value);
        else if (key == "iterations") cfg.iterations = parse_u32(key, value);
        else fail_data("config: unknown key '" + key + "'");
    }
    if (seen.count("M") && seen.count("categories"))
        fail_data("config: set either 'M' or 'categories', not both");
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_data("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string render_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "seed = " << cfg.seed << "\n";
    out << "S = " << cfg.grid_s << "\n";
    out << "H = " << cfg.h << "\n";
    out << "W = " << cfg.w << "\n";
    if (cfg.categories.empty()) out << "M = " << cfg.m << "\n";
    else out << "categories = " << cfg.categories << "\n";
    if (!cfg.hierarchy.empty()) out << "hierarchy = " << cfg.hierarchy << "\n";
    if (!cfg.vocab.empty()) out << "vocab = " << cfg.vocab << "\n";
    out << "D = " << cfg.dim << "\n";
    out << "n_layers_enc = " << cfg.n_layers_enc << "\n";
    out << "n_layers_dec = " << cfg.n_layers_dec << "\n";
    out << "n_heads = " << cfg.n_heads << "\n";
    out << "ffn_mult = " << cfg.ffn_mult << "\n";
    out << "l_t_max = " << cfg.l_t_max << "\n";
    out << "lr = " << format_f64(cfg.lr) << "\n";
    out << "weight_decay = " << format_f64(cfg.weight_decay) << "\n";
    out << "beta1 = " << format_f64(cfg.beta1) << "\n";
    out << "beta2 = " << format_f64(cfg.beta2) << "\n";
    out << "eps = " << format_f64(cfg.eps) << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "steps = " << cfg.steps << "\n";
    out << "log_every = " << cfg.log_every << "\n";
    out << "patch_size = " << cfg.patch_size << "\n";
    out << "K = " << cfg.k << "\n";
    out << "iterations = " << cfg.iterations << "\n";
    return out.str();
}

}  // namespace ifseg
