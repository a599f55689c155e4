#include "pom/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace pom {

const Tensor<double>& Checkpoint::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.value;
    throw std::out_of_range("checkpoint has no tensor '" + name + "'");
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put(std::string& buf, U v) {
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &v, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
    buf.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

void put_string(std::string& buf, const std::string& s) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
    buf += s;
}

class Reader {
public:
    Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

    template <typename U>
    U get() {
        need(sizeof(U));
        unsigned char bytes[sizeof(U)];
        std::memcpy(bytes, data_.data() + pos_, sizeof(U));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
        pos_ += sizeof(U);
        U v;
        std::memcpy(&v, bytes, sizeof(U));
        return v;
    }

    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string raw(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("checkpoint " + path_ + ": " + what + " (offset " + std::to_string(pos_) + ")");
    }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) fail("truncated file");
    }
    std::string data_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string buf = "POM1";
    put<std::uint32_t>(buf, kCheckpointVersion);
    put<std::uint64_t>(buf, ckpt.step);
    put_string(buf, ckpt.config);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        put_string(buf, t.name);
        put<std::uint8_t>(buf, 1);
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.value.rank()));
        for (std::size_t d : t.value.shape()) put<std::uint64_t>(buf, d);
        for (double v : t.value.data()) put<double>(buf, v);
    }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    Reader r(std::string(std::istreambuf_iterator<char>(is), {}), path);
    if (r.raw(4) != "POM1") r.fail("bad magic");
    Checkpoint ck;
    ck.version = r.get<std::uint32_t>();
    if (ck.version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(ck.version));
    ck.step = r.get<std::uint64_t>();
    ck.config = r.get_string();
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.get_string();
        const auto dtype = r.get<std::uint8_t>();
        if (dtype > 1) r.fail("unknown dtype code " + std::to_string(dtype) + " for '" + t.name + "'");
        const auto rank = r.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        std::vector<double> data(numel(shape));
        for (double& v : data) v = dtype == 1 ? r.get<double>() : static_cast<double>(r.get<float>());
        t.value = Tensor<double>(std::move(shape), std::move(data));
        ck.tensors.push_back(std::move(t));
    }
    if (!r.done()) r.fail("trailing bytes");
    return ck;
}

}  // namespace pom
