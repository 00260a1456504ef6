#include "lens/anchor.hpp"

#include <fstream>
#include <json.hpp>

#include "lens/decoder.hpp"

namespace lens {

Vec anchor_from_rows(const Matrix& rows) {
    if (rows.rows < 1) throw ContractViolation("anchor: profile must contain at least one token");
    Vec mean(rows.cols, 0.0);
    for (int r = 0; r < rows.rows; ++r) {
        const double* row = rows.row(r);
        for (int c = 0; c < rows.cols; ++c) mean[c] += row[c];
    }
    for (double& v : mean) v /= static_cast<double>(rows.rows);
    ensure_finite(mean, "anchor");
    if (norm(mean) == 0.0) throw DegenerateInput("anchor: profile embeddings average to zero");
    return mean;
}

Vec build_anchor(const Decoder& dec, const CharacterProfile& profile) {
    return anchor_from_rows(dec.embed_tokens(profile.token_ids));
}

std::vector<CharacterProfile> load_profiles(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open: " + path);
    std::vector<CharacterProfile> out;
    std::string line;
    long line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("profile: invalid JSON", line_no);
        if (!j.is_object() || !j.contains("name") || !j.contains("token_ids"))
            throw ParseError("profile: expected {\"name\", \"token_ids\"}", line_no);
        CharacterProfile p;
        if (!j["name"].is_string()) throw ParseError("profile: name must be a string", line_no);
        p.name = j["name"].get<std::string>();
        if (!j["token_ids"].is_array())
            throw ParseError("profile: token_ids must be an array", line_no);
        for (const auto& t : j["token_ids"]) {
            if (!t.is_number_integer())
                throw ParseError("profile: token_ids must be integers", line_no);
            p.token_ids.push_back(t.get<int>());
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace lens
