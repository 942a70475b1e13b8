#include "ulse/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ulse::wav {

namespace {

uint32_t rd_u32(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}
uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | uint16_t(p[1]) << 8; }

void wr_u32(std::ofstream& f, uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    f.write(reinterpret_cast<char*>(b), 4);
}
void wr_u16(std::ofstream& f, uint16_t v) {
    uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
    f.write(reinterpret_cast<char*>(b), 2);
}

} // namespace

Clip read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::invalid_argument("cannot open wav file: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) || std::memcmp(buf.data() + 8, "WAVE", 4))
        throw std::invalid_argument("not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const uint8_t* data = nullptr;
    uint32_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const uint8_t* hdr = buf.data() + pos;
        uint32_t len = rd_u32(hdr + 4);
        const uint8_t* body = hdr + 8;
        if (pos + 8 + len > buf.size()) len = uint32_t(buf.size() - pos - 8);
        if (!std::memcmp(hdr, "fmt ", 4) && len >= 16) {
            format = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
        } else if (!std::memcmp(hdr, "data", 4)) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);
    }

    if (!data) throw std::invalid_argument("wav file has no data chunk: " + path);
    if (channels != 1)
        throw std::invalid_argument("multi-channel wav rejected (" + std::to_string(channels) +
                                    " channels): " + path);
    if (rate != 16000)
        throw std::invalid_argument("expected 16 kHz wav, got " + std::to_string(rate) + " Hz");

    Clip clip;
    clip.sample_rate = int(rate);
    if (format == 1 && bits == 16) {
        size_t n = data_len / 2;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            int16_t s = int16_t(rd_u16(data + 2 * i));
            clip.samples[i] = double(s) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        size_t n = data_len / 4;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t u = rd_u32(data + 4 * i);
            float x;
            std::memcpy(&x, &u, 4);
            clip.samples[i] = double(x);
        }
    } else {
        throw std::invalid_argument("unsupported wav encoding (want 16-bit PCM or 32-bit float)");
    }
    return clip;
}

void write(const std::string& path, const Clip& clip, bool float32) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write wav file: " + path);
    const uint32_t n = uint32_t(clip.samples.size());
    const uint16_t bytes = float32 ? 4 : 2;
    const uint32_t data_len = n * bytes;

    f.write("RIFF", 4);
    wr_u32(f, 36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    wr_u32(f, 16);
    wr_u16(f, float32 ? 3 : 1);
    wr_u16(f, 1);
    wr_u32(f, uint32_t(clip.sample_rate));
    wr_u32(f, uint32_t(clip.sample_rate) * bytes);
    wr_u16(f, bytes);
    wr_u16(f, uint16_t(bytes * 8));
    f.write("data", 4);
    wr_u32(f, data_len);

    if (float32) {
        for (double s : clip.samples) {
            float x = float(s);
            uint32_t u;
            std::memcpy(&u, &x, 4);
            wr_u32(f, u);
        }
    } else {
        for (double s : clip.samples) {
            long q = std::lrint(std::clamp(s, -1.0, 1.0) * 32768.0);
            q = std::clamp(q, -32768l, 32767l);
            wr_u16(f, uint16_t(int16_t(q)));
        }
    }
}

} // namespace ulse::wav
