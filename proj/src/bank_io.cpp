#include "cgcnn/bank_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cgcnn/error.hpp"

namespace cgcnn {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'C', 'N'};
constexpr std::size_t kHeaderBytes = 4 + 5 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

double get_f64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_bank(const ConvFeatureBank& bank) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + 8 * bank.parameter_count());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, kBankFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(bank.features()));
    put_u32(out, static_cast<std::uint32_t>(bank.kernel()));
    put_u32(out, static_cast<std::uint32_t>(bank.channels()));
    put_u32(out, static_cast<std::uint32_t>(bank.stride()));
    for (double v : bank.filters()) put_f64(out, v);
    for (double v : bank.biases()) put_f64(out, v);
    return out;
}

ConvFeatureBank decode_bank(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw IoError("not a CGCN bank container");
    }
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kBankFormatVersion) {
        throw IoError("unsupported bank format version " + std::to_string(version));
    }
    BankGeometry g;
    g.features = get_u32(bytes.data() + 8);
    g.kernel = get_u32(bytes.data() + 12);
    g.channels = get_u32(bytes.data() + 16);
    g.stride = get_u32(bytes.data() + 20);
    ConvFeatureBank bank(g);
    const std::size_t expected = kHeaderBytes + 8 * bank.parameter_count();
    if (bytes.size() != expected) {
        throw IoError("bank container has " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(expected));
    }
    const std::uint8_t* p = bytes.data() + kHeaderBytes;
    for (double& v : bank.filters()) {
        v = get_f64(p);
        p += 8;
    }
    for (double& v : bank.biases()) {
        v = get_f64(p);
        p += 8;
    }
    if (!bank.all_finite()) throw IoError("bank container holds non-finite parameters");
    return bank;
}

void write_bank(const ConvFeatureBank& bank, const std::filesystem::path& path) {
    const auto bytes = encode_bank(bank);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

ConvFeatureBank read_bank(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open bank file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_bank(bytes);
}

}  // namespace cgcnn
