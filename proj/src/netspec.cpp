#include "vsr/netspec.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace vsr {
namespace {

std::string format_value(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

double LayerSpec::get(const std::string& key) const {
    for (const auto& [k, v] : params)
        if (k == key) return v;
    throw ConfigError("layer '" + kind + "' has no parameter '" + key + "'");
}

int LayerSpec::get_int(const std::string& key) const { return static_cast<int>(get(key)); }

std::string NetworkSpec::to_text() const {
    std::ostringstream out;
    out << "net " << name << "\n";
    for (const auto& layer : layers) {
        out << layer.kind;
        for (const auto& [k, v] : layer.params) out << ' ' << k << '=' << format_value(v);
        out << "\n";
    }
    return out.str();
}

NetworkSpec NetworkSpec::from_text(const std::string& text) {
    NetworkSpec spec;
    std::istringstream in(text);
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (!have_header) {
            if (head != "net") throw ConfigError("network spec must start with 'net <name>'");
            ls >> spec.name;
            if (spec.name.empty()) throw ConfigError("network spec is missing a name");
            have_header = true;
            continue;
        }
        LayerSpec layer;
        layer.kind = head;
        std::string tok;
        while (ls >> tok) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ConfigError("malformed layer parameter '" + tok + "' in '" + line + "'");
            const std::string key = tok.substr(0, eq);
            const std::string val = tok.substr(eq + 1);
            char* end = nullptr;
            const double v = std::strtod(val.c_str(), &end);
            if (end == val.c_str() || *end != '\0')
                throw ConfigError("non-numeric layer parameter '" + tok + "'");
            layer.params.emplace_back(key, v);
        }
        spec.layers.push_back(std::move(layer));
    }
    if (!have_header) throw ConfigError("empty network spec");
    return spec;
}

LayerSpec layer_spec(std::string kind,
                     std::initializer_list<std::pair<std::string, double>> params) {
    LayerSpec l;
    l.kind = std::move(kind);
    l.params.assign(params.begin(), params.end());
    return l;
}

}  // namespace vsr
