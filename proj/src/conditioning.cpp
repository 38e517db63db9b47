#include "vmc/conditioning.hpp"

#include <json.hpp>

namespace vmc {

namespace vocab {

int lookup(const std::vector<std::string>& table, const std::string& name,
           const char* factor) {
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i] == name) return static_cast<int>(i);
    throw ConfigError(std::string("unknown ") + factor + " category '" + name + "'");
}

}  // namespace vocab

namespace {

void check_id(const std::optional<int>& id, int count, const char* factor) {
    if (id)
        require_config(*id >= 0 && *id < count,
                       std::string(factor) + " id out of vocabulary bounds");
}

}  // namespace

Conditioning encode_prompt(const StructuredPrompt& p) {
    require_config(p.motion >= 0 && p.motion < vocab::kMotionCount,
                   "motion id out of vocabulary bounds");
    check_id(p.shape, vocab::kShapeCount, "shape");
    check_id(p.intensity, vocab::kIntensityCount, "intensity");
    check_id(p.texture, vocab::kTextureCount, "texture");
    check_id(p.level, vocab::kLevelCount, "level");

    Conditioning c;
    c.embedding = Eigen::VectorXd::Zero(vocab::kEmbedDim);
    c.embedding[EmbedBlocks::motion_begin + p.motion] = 1.0;
    if (p.shape) c.embedding[EmbedBlocks::shape_begin + *p.shape] = 1.0;
    if (p.intensity) c.embedding[EmbedBlocks::intensity_begin + *p.intensity] = 1.0;
    if (p.texture) c.embedding[EmbedBlocks::texture_begin + *p.texture] = 1.0;
    if (p.level) c.embedding[EmbedBlocks::level_begin + *p.level] = 1.0;
    return c;
}

StructuredPrompt appearance_invariant(const StructuredPrompt& p) {
    StructuredPrompt out;
    out.motion = p.motion;
    return out;
}

bool is_appearance_invariant(const StructuredPrompt& p) {
    return !p.shape && !p.intensity && !p.texture && !p.level;
}

std::string prompt_to_json(const StructuredPrompt& p) {
    nlohmann::json j;
    j["motion"] = vocab::motions().at(static_cast<std::size_t>(p.motion));
    j["appearance"] = nlohmann::json::array();
    if (p.shape) j["appearance"].push_back(vocab::shapes().at(*p.shape));
    if (p.intensity) j["appearance"].push_back(vocab::intensities().at(*p.intensity));
    j["background"] = nlohmann::json::array();
    if (p.texture) j["background"].push_back(vocab::textures().at(*p.texture));
    if (p.level) j["background"].push_back(vocab::levels().at(*p.level));
    return j.dump();
}

StructuredPrompt prompt_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad prompt JSON: ") + e.what());
    }
    require_config(j.is_object() && j.contains("motion"),
                   "prompt JSON needs a \"motion\" field");
    StructuredPrompt p;
    p.motion = vocab::lookup(vocab::motions(), j.at("motion").get<std::string>(),
                             "motion");
    // Appearance and background entries are tagged by vocabulary membership;
    // the name sets are disjoint.
    auto assign = [&](const nlohmann::json& arr, bool appearance) {
        for (const auto& item : arr) {
            const auto name = item.get<std::string>();
            const auto& first = appearance ? vocab::shapes() : vocab::textures();
            const auto& second = appearance ? vocab::intensities() : vocab::levels();
            bool matched = false;
            for (std::size_t i = 0; i < first.size(); ++i)
                if (first[i] == name) {
                    (appearance ? p.shape : p.texture) = static_cast<int>(i);
                    matched = true;
                }
            for (std::size_t i = 0; i < second.size(); ++i)
                if (second[i] == name) {
                    (appearance ? p.intensity : p.level) = static_cast<int>(i);
                    matched = true;
                }
            require_config(matched, "unknown " +
                                        std::string(appearance ? "appearance"
                                                               : "background") +
                                        " category '" + name + "'");
        }
    };
    if (j.contains("appearance")) assign(j.at("appearance"), true);
    if (j.contains("background")) assign(j.at("background"), false);
    return p;
}

std::string prompt_to_string(const StructuredPrompt& p) {
    std::string s = vocab::motions().at(static_cast<std::size_t>(p.motion));
    if (p.shape) s += " " + vocab::shapes().at(*p.shape);
    if (p.intensity) s += " " + vocab::intensities().at(*p.intensity);
    if (p.texture) s += " on " + vocab::textures().at(*p.texture);
    if (p.level) s += " " + vocab::levels().at(*p.level);
    return s;
}

}  // namespace vmc
