#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vsr/error.hpp"

namespace vsr {

// Declarative layer description, serialized one per line as
// "kind key=value key=value ...". Values print canonically (integers without
// a decimal point, other reals with full precision), so
// parse(print(spec)) == spec.
struct LayerSpec {
    std::string kind;
    std::vector<std::pair<std::string, double>> params;

    bool operator==(const LayerSpec&) const = default;
    double get(const std::string& key) const;
    int get_int(const std::string& key) const;
};

struct NetworkSpec {
    std::string name;
    std::vector<LayerSpec> layers;

    bool operator==(const NetworkSpec&) const = default;

    std::string to_text() const;
    static NetworkSpec from_text(const std::string& text);
};

LayerSpec layer_spec(std::string kind,
                     std::initializer_list<std::pair<std::string, double>> params);

}  // namespace vsr
