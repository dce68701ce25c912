#include "synthrad/rng.hpp"

#include <cstring>
#include <sstream>

namespace synthrad {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t parse_hex64(const std::string& s) {
    if (s.size() != 16) throw DataError("Rng::deserialize: bad hex word '" + s + "'");
    return std::stoull(s, nullptr, 16);
}

}  // namespace

std::string Rng::serialize() const {
    std::uint64_t spare_bits = 0;
    static_assert(sizeof(spare_bits) == sizeof(spare_));
    std::memcpy(&spare_bits, &spare_, sizeof(spare_bits));
    std::ostringstream out;
    out << hex64(state_[0]) << ' ' << hex64(state_[1]) << ' ' << hex64(state_[2]) << ' '
        << hex64(state_[3]) << ' ' << (has_spare_ ? 1 : 0) << ' ' << hex64(spare_bits);
    return out.str();
}

Rng Rng::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string w[4], spare_hex;
    int has_spare = 0;
    if (!(in >> w[0] >> w[1] >> w[2] >> w[3] >> has_spare >> spare_hex))
        throw DataError("Rng::deserialize: malformed state '" + text + "'");
    Rng rng(0);
    for (int i = 0; i < 4; ++i) rng.state_[static_cast<std::size_t>(i)] = parse_hex64(w[i]);
    rng.has_spare_ = has_spare != 0;
    const std::uint64_t bits = parse_hex64(spare_hex);
    std::memcpy(&rng.spare_, &bits, sizeof(bits));
    return rng;
}

}  // namespace synthrad
