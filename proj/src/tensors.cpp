#include "vmc/tensors.hpp"

namespace vmc {

const char* label_name(ParamLabel l) {
    switch (l) {
        case ParamLabel::kTemporalAttention: return "TEMPORAL_ATTENTION";
        case ParamLabel::kOther: return "OTHER";
    }
    return "OTHER";
}

ParamLabel label_from_name(const std::string& s) {
    if (s == "TEMPORAL_ATTENTION") return ParamLabel::kTemporalAttention;
    if (s == "OTHER") return ParamLabel::kOther;
    throw ConfigError("unknown parameter label '" + s + "'");
}

}  // namespace vmc
