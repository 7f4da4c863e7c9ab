#include "egghand/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "egghand/error.hpp"

namespace egghand::checkpoint {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<char>& out, T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
public:
    Reader(const std::vector<char>& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    const char* take(std::size_t n) {
        need(n);
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            fail(ErrorKind::Truncated, path_.string() + ": file ends " + std::to_string(n - (bytes_.size() - pos_)) +
                                           " bytes early");
    }

    const std::vector<char>& bytes_;
    const std::filesystem::path& path_;
    std::size_t pos_ = 0;
};

}  // namespace

void write_container(const Container& c, const std::filesystem::path& path) {
    std::vector<char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put<std::uint32_t>(out, kVersion);
    const std::string header = c.header.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());
    put<std::uint64_t>(out, c.payload.size());
    for (double v : c.payload) put<float>(out, static_cast<float>(v));
    put<std::uint64_t>(out, c.trailer.size());
    for (double v : c.trailer) put<double>(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorKind::Io, "write failed: " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::MissingFile, "missing file: " + path.string());
    const std::vector<char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    Reader r(bytes, path);
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        fail(ErrorKind::BadMagic, path.string() + ": not an EGGH container");
    r.take(4);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion) fail(ErrorKind::BadVersion, path.string() + ": unsupported version " + std::to_string(version));
    const auto header_len = r.get<std::uint32_t>();
    const char* header = r.take(header_len);
    Container c;
    c.header = nlohmann::json::parse(header, header + header_len, nullptr, false);
    if (c.header.is_discarded() || !c.header.is_object())
        fail(ErrorKind::Integrity, path.string() + ": header is not a JSON object");
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / sizeof(float)) fail(ErrorKind::Truncated, path.string() + ": payload truncated");
    c.payload.resize(n);
    for (auto& v : c.payload) v = static_cast<double>(r.get<float>());
    const auto m = r.get<std::uint64_t>();
    if (m > r.remaining() / sizeof(double)) fail(ErrorKind::Truncated, path.string() + ": trailer truncated");
    c.trailer.resize(m);
    for (auto& v : c.trailer) v = r.get<double>();
    if (r.remaining() != 0)
        fail(ErrorKind::Integrity, path.string() + ": " + std::to_string(r.remaining()) + " unexpected trailing bytes");
    return c;
}

}  // namespace egghand::checkpoint
