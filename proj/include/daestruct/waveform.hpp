#pragma once

// Source waveforms (dc, sin, pwl) with analytic derivatives. The index-2
// reduction path consumes second derivatives of source terms, so waveforms
// must differentiate exactly rather than numerically.

#include "daestruct/errors.hpp"
#include "daestruct/linalg.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace daestruct {

enum class WaveformKind { Dc, Sin, Pwl };

struct Waveform {
    WaveformKind kind = WaveformKind::Dc;
    double dc_value = 0.0;
    // sin: offset + amplitude * sin(2*pi*frequency*t + phase)
    double offset = 0.0;
    double amplitude = 0.0;
    double frequency = 0.0;
    double phase = 0.0;
    // pwl: knots (t_i, v_i), t strictly increasing; constant outside the range
    std::vector<std::pair<double, double>> knots;

    static Waveform dc(double v) {
        Waveform w;
        w.kind = WaveformKind::Dc;
        w.dc_value = v;
        return w;
    }

    static Waveform sine(double offset, double amplitude, double frequency,
                         double phase = 0.0) {
        Waveform w;
        w.kind = WaveformKind::Sin;
        w.offset = offset;
        w.amplitude = amplitude;
        w.frequency = frequency;
        w.phase = phase;
        return w;
    }

    static Waveform pwl(std::vector<std::pair<double, double>> knots) {
        if (knots.empty()) throw ParseError("pwl waveform needs at least one knot");
        for (std::size_t i = 1; i < knots.size(); ++i) {
            if (knots[i].first <= knots[i - 1].first) {
                throw ParseError("pwl waveform times must be strictly increasing");
            }
        }
        Waveform w;
        w.kind = WaveformKind::Pwl;
        w.knots = std::move(knots);
        return w;
    }

    /// k-th time derivative at t. pwl second and higher derivatives are zero
    /// between knots; the distributional part at knots is not represented.
    [[nodiscard]] double eval(double t, int derivative_order = 0) const {
        switch (kind) {
        case WaveformKind::Dc:
            return derivative_order == 0 ? dc_value : 0.0;
        case WaveformKind::Sin: {
            const double omega = 2.0 * std::numbers::pi * frequency;
            const double arg = omega * t + phase;
            const double scale = amplitude * std::pow(omega, derivative_order);
            switch (derivative_order % 4) {
            case 0: return (derivative_order == 0 ? offset : 0.0) + scale * std::sin(arg);
            case 1: return scale * std::cos(arg);
            case 2: return -scale * std::sin(arg);
            default: return -scale * std::cos(arg);
            }
        }
        case WaveformKind::Pwl: {
            if (knots.size() == 1 || t <= knots.front().first) {
                return derivative_order == 0 ? knots.front().second : 0.0;
            }
            if (t >= knots.back().first) {
                return derivative_order == 0 ? knots.back().second : 0.0;
            }
            std::size_t seg = 0;
            while (seg + 1 < knots.size() && knots[seg + 1].first < t) ++seg;
            const auto& [t0, v0] = knots[seg];
            const auto& [t1, v1] = knots[seg + 1];
            const double slope = (v1 - v0) / (t1 - t0);
            if (derivative_order == 0) return v0 + slope * (t - t0);
            if (derivative_order == 1) return slope;
            return 0.0;
        }
        }
        return 0.0;
    }

    /// True when derivatives are discontinuous somewhere (pwl knots).
    [[nodiscard]] bool has_kinks() const {
        return kind == WaveformKind::Pwl && knots.size() > 1;
    }

    [[nodiscard]] std::string describe() const {
        switch (kind) {
        case WaveformKind::Dc: return "dc";
        case WaveformKind::Sin: return "sin";
        case WaveformKind::Pwl: return "pwl";
        }
        return "?";
    }
};

/// Stack of waveforms evaluated into a vector; used for element forcing and
/// for the assembled right-hand side.
inline Vector eval_waveforms(const std::vector<Waveform>& wfs, double t,
                             int derivative_order = 0) {
    Vector v(static_cast<Index>(wfs.size()));
    for (std::size_t i = 0; i < wfs.size(); ++i) {
        v(static_cast<Index>(i)) = wfs[i].eval(t, derivative_order);
    }
    return v;
}

} // namespace daestruct
