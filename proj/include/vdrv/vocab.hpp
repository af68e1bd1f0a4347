#pragma once

#include <map>
#include <string>
#include <vector>

#include "vdrv/errors.hpp"

namespace vdrv {

// Reserved ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;

// Bijective symbol<->id table for goal prompts, commands and instruction
// output symbols. Size is fixed at model construction and serialized into
// checkpoints.
class SymbolVocab {
public:
    SymbolVocab() = default;
    explicit SymbolVocab(std::vector<std::string> names) : names_(std::move(names)) {
        for (size_t i = 0; i < names_.size(); ++i) {
            if (!ids_.emplace(names_[i], static_cast<int>(i)).second)
                throw VocabError("duplicate symbol: " + names_[i]);
        }
    }

    int size() const { return static_cast<int>(names_.size()); }

    int id(const std::string& name) const {
        auto it = ids_.find(name);
        if (it == ids_.end()) throw VocabError("unknown symbol: " + name);
        return it->second;
    }

    const std::string& name(int id) const {
        if (id < 0 || id >= size()) throw VocabError("id " + std::to_string(id) + " out of range");
        return names_[id];
    }

    const std::vector<std::string>& names() const { return names_; }

    static SymbolVocab standard(int size = 64) {
        std::vector<std::string> n = {
            "<pad>", "<bos>", "<eos>",
            "goal",
            "cmd_follow", "cmd_left", "cmd_right", "cmd_stop",
            "hz_clear", "hz_lead", "hz_stopline",
            "mv_follow", "mv_left", "mv_right", "mv_halt",
            "sp_cruise", "sp_decel", "sp_brake",
        };
        if (size < static_cast<int>(n.size()))
            throw ConfigError("vocab size " + std::to_string(size) + " below symbol count");
        while (static_cast<int>(n.size()) < size) n.push_back("sym_" + std::to_string(n.size()));
        return SymbolVocab(std::move(n));
    }

private:
    std::vector<std::string> names_;
    std::map<std::string, int> ids_;
};

}  // namespace vdrv
