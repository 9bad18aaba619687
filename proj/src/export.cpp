#include "a3m/export.hpp"

#include "a3m/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace a3m {

std::string format_double(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

RowMat normalize_minmax(const RowMat& m)
{
    RowMat out = RowMat::Zero(m.rows(), m.cols());
    if (m.size() == 0)
        return out;
    const double lo = m.minCoeff(), hi = m.maxCoeff();
    if (hi > lo)
        out = (m.array() - lo) / (hi - lo);
    return out;
}

std::string format_grid_csv(const RowMat& m)
{
    std::string out;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c)
                out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    return out;
}

std::string format_pgm(const RowMat& unit)
{
    std::string out = "P5\n" + std::to_string(unit.cols()) + " " + std::to_string(unit.rows()) + "\n255\n";
    for (Eigen::Index r = 0; r < unit.rows(); ++r)
        for (Eigen::Index c = 0; c < unit.cols(); ++c) {
            const double v = std::clamp(unit(r, c), 0.0, 1.0);
            out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    return out;
}

std::string format_loss_curve(const std::vector<double>& epoch_loss)
{
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < epoch_loss.size(); ++e)
        out += std::to_string(e + 1) + "," + format_double(epoch_loss[e]) + "\n";
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("short write to " + path.string());
}

} // namespace a3m
