#pragma once

#include <string>
#include <vector>

#include "lens/kernel.hpp"

namespace lens {

class Decoder;

struct CharacterProfile {
    std::string name;
    std::vector<int> token_ids;
};

// Mean of the given rows. The anchor is order-independent by construction;
// an exactly zero mean is rejected because every downstream use needs a
// direction.
Vec anchor_from_rows(const Matrix& rows);

// Mean-pooled embedding rows of the profile tokens.
Vec build_anchor(const Decoder& dec, const CharacterProfile& profile);

// JSON Lines, one {"name": ..., "token_ids": [...]} object per character.
std::vector<CharacterProfile> load_profiles(const std::string& path);

}  // namespace lens
