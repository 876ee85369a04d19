#include "bdverify/trigger_gen.hpp"

#include "bdverify/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bdverify {

namespace {

double loss_of_output(std::span<const double> out, int target)
{
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < out.size(); ++j)
        if (static_cast<int>(j) != target)
            best_other = std::max(best_other, out[j]);
    const double n_s = out[target];
    if (n_s > best_other)
        return 0.0;
    return best_other - n_s + kLossEpsilon;
}

// Stamps in place into a scratch buffer to avoid copying whole images.
class LossEvaluator {
public:
    LossEvaluator(const Network& net, std::span<const Image> images, const TriggerSpec& spec,
                  int target)
        : net_(net), images_(images), target_(target),
          indices_(trigger_pixel_indices(net.input_shape(), spec))
    {
    }

    double operator()(std::span<const double> values)
    {
        double total = 0.0;
        for (const auto& image : images_) {
            scratch_ = image.pixels;
            for (std::size_t k = 0; k < indices_.size(); ++k)
                scratch_[indices_[k]] = values[k];
            total += loss_of_output(forward(net_, scratch_), target_);
        }
        return total;
    }

private:
    const Network& net_;
    std::span<const Image> images_;
    int target_;
    std::vector<std::size_t> indices_;
    std::vector<double> scratch_;
};

}  // namespace

double image_loss(const Network& net, const Image& image, const Trigger& trigger, int target)
{
    BDV_REQUIRE(target >= 0 && target < net.label_count(), "image_loss: target out of range");
    return loss_of_output(forward(net, stamp(image, trigger)), target);
}

double total_loss(const Network& net, std::span<const Image> images, const Trigger& trigger,
                  int target)
{
    double sum = 0.0;
    for (const auto& image : images)
        sum += image_loss(net, image, trigger, target);
    return sum;
}

AttackLossReport loss_report(const Network& net, std::span<const Image> images,
                             const Trigger& trigger, int target)
{
    AttackLossReport report;
    for (const auto& image : images) {
        const double loss = image_loss(net, image, trigger, target);
        report.losses.push_back(loss);
        report.success.push_back(loss == 0.0);
        report.total += loss;
    }
    return report;
}

bool attacks_all(const Network& net, std::span<const Image> images, const Trigger& trigger,
                 int target)
{
    return std::all_of(images.begin(), images.end(), [&](const Image& image) {
        return strictly_dominates(forward(net, stamp(image, trigger)), target);
    });
}

std::optional<Trigger> op_trigger(const Network& net, std::span<const Image> images,
                                  const std::optional<std::vector<double>>& candidate,
                                  const TriggerSpec& spec, int target,
                                  const OptimizerOptions& options)
{
    BDV_REQUIRE(!images.empty(), "op_trigger: no images");
    BDV_REQUIRE(target >= 0 && target < net.label_count(), "op_trigger: target out of range");
    const auto indices = trigger_pixel_indices(net.input_shape(), spec);
    const std::size_t dim = indices.size();
    std::vector<double> lo(dim);
    std::vector<double> hi(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        lo[k] = net.input_domain().lo[indices[k]];
        hi[k] = net.input_domain().hi[indices[k]];
    }
    auto project = [&](std::vector<double>& v) {
        for (std::size_t k = 0; k < dim; ++k)
            v[k] = std::clamp(v[k], lo[k], hi[k]);
    };

    if (candidate) {
        BDV_REQUIRE(candidate->size() == dim, "op_trigger: candidate size mismatch");
        Trigger t{spec, *candidate};
        project(t.values);
        if (attacks_all(net, images, t, target))
            return t;
    }

    const auto deadline =
        std::chrono::steady_clock::now() +
        std::chrono::duration_cast<std::chrono::steady_clock::duration>(options.budget);
    auto expired = [&] {
        return options.stop.stop_requested() || std::chrono::steady_clock::now() > deadline;
    };

    LossEvaluator loss(net, images, spec, target);
    std::mt19937_64 rng(options.seed);

    std::vector<std::vector<double>> starts;
    if (candidate) {
        starts.push_back(*candidate);
        project(starts.back());
    } else {
        std::vector<double> mid(dim);
        for (std::size_t k = 0; k < dim; ++k)
            mid[k] = 0.5 * (lo[k] + hi[k]);
        starts.push_back(std::move(mid));
    }
    for (int r = 0; r < options.restarts; ++r) {
        std::vector<double> s(dim);
        for (std::size_t k = 0; k < dim; ++k)
            s[k] = std::uniform_real_distribution<double>(lo[k], hi[k])(rng);
        starts.push_back(std::move(s));
    }

    std::vector<double> grad(dim);
    std::vector<double> probe(dim);
    for (auto& point : starts) {
        double current = loss(point);
        double rate = options.learning_rate;
        for (int it = 0; it < options.max_iterations && current > 0.0; ++it) {
            if (expired())
                return std::nullopt;
            double largest = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                probe = point;
                probe[k] = point[k] + options.fd_step;
                const double up = loss(probe);
                probe[k] = point[k] - options.fd_step;
                const double down = loss(probe);
                grad[k] = (up - down) / (2.0 * options.fd_step);
                largest = std::max(largest, std::abs(grad[k]));
            }
            if (largest == 0.0)
                break;
            // Step length `rate` in the max-norm along the gradient direction.
            probe = point;
            for (std::size_t k = 0; k < dim; ++k)
                probe[k] -= rate * grad[k] / largest;
            project(probe);
            const double next = loss(probe);
            if (next < current) {
                point.swap(probe);
                current = next;
            } else {
                rate *= 0.5;
                if (rate < options.min_learning_rate)
                    break;
            }
        }
        if (current == 0.0) {
            Trigger t{spec, point};
            if (attacks_all(net, images, t, target))
                return t;
        }
    }
    return std::nullopt;
}

}  // namespace bdverify
