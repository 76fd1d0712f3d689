#include "dlps/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dlps {

namespace {

std::string trim(const std::string & s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string & path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("config: cannot open " + path);
    }
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_text(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string & text, const std::string & origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(is, line)) {
        line_no += 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                         ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                     ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.set(section.empty() ? key : section + "." + key, value);
    }
    return cfg;
}

void KeyValueConfig::set(const std::string & key, const std::string & value) {
    entries_[key] = value;
    consumed_[key] = false;
}

bool KeyValueConfig::has(const std::string & key) const {
    return entries_.count(key) > 0;
}

std::string KeyValueConfig::take(const std::string & key) {
    consumed_[key] = true;
    return entries_.at(key);
}

std::string KeyValueConfig::get_string(const std::string & key, const std::string & fallback) {
    return has(key) ? take(key) : fallback;
}

double KeyValueConfig::get_double(const std::string & key, double fallback) {
    if (!has(key)) {
        return fallback;
    }
    const std::string raw = take(key);
    try {
        return std::stod(raw);
    } catch (const std::exception &) {
        throw std::runtime_error(origin_ + ": key '" + key + "' is not a number: " + raw);
    }
}

int KeyValueConfig::get_int(const std::string & key, int fallback) {
    if (!has(key)) {
        return fallback;
    }
    const std::string raw = take(key);
    try {
        return std::stoi(raw);
    } catch (const std::exception &) {
        throw std::runtime_error(origin_ + ": key '" + key + "' is not an integer: " + raw);
    }
}

std::uint64_t KeyValueConfig::get_u64(const std::string & key, std::uint64_t fallback) {
    if (!has(key)) {
        return fallback;
    }
    const std::string raw = take(key);
    try {
        return std::stoull(raw);
    } catch (const std::exception &) {
        throw std::runtime_error(origin_ + ": key '" + key + "' is not an integer: " + raw);
    }
}

bool KeyValueConfig::get_bool(const std::string & key, bool fallback) {
    if (!has(key)) {
        return fallback;
    }
    std::string raw = take(key);
    std::transform(raw.begin(), raw.end(), raw.begin(), ::tolower);
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") {
        return true;
    }
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") {
        return false;
    }
    throw std::runtime_error(origin_ + ": key '" + key + "' is not a boolean: " + raw);
}

void KeyValueConfig::finish() const {
    for (const auto & [key, used] : consumed_) {
        if (!used) {
            throw std::runtime_error(origin_ + ": unknown key '" + key + "'");
        }
    }
}

double ExperimentConfig::effective_sigma() const {
    if (op.tier == Difficulty::kNone || op.kind != "inpaint") {
        return op.sigma_y;
    }
    switch (op.tier) {
        case Difficulty::kEasy:
            return 0.0;
        case Difficulty::kMedium:
            return 0.05;
        case Difficulty::kHard:
            return 0.1;
        default:
            return op.sigma_y;
    }
}

double ExperimentConfig::effective_lambda2() const {
    if (lambda2 >= 0.0) {
        return lambda2;
    }
    const double sigma = effective_sigma();
    return sigma > 0.0 ? 1.0 / (2.0 * sigma * sigma) : 50.0;
}

double ExperimentConfig::effective_fraction_hidden() const {
    if (op.tier == Difficulty::kNone) {
        return op.fraction_hidden;
    }
    switch (op.tier) {
        case Difficulty::kEasy:
            return 0.5;
        case Difficulty::kMedium:
            return 0.7;
        case Difficulty::kHard:
            return 0.85;
        default:
            return op.fraction_hidden;
    }
}

int ExperimentConfig::effective_box_side(int height, int width) const {
    int side32 = 12;
    switch (op.tier) {
        case Difficulty::kEasy:
            side32 = 8;
            break;
        case Difficulty::kMedium:
            side32 = 12;
            break;
        case Difficulty::kHard:
            side32 = 16;
            break;
        default:
            return op.box_w > 0 ? op.box_w : 12 * std::min(height, width) / 32;
    }
    const int side = side32 * std::min(height, width) / 32;
    return std::max(1, side);
}

namespace {

Difficulty parse_tier(const std::string & name) {
    if (name.empty() || name == "none") {
        return Difficulty::kNone;
    }
    if (name == "easy") {
        return Difficulty::kEasy;
    }
    if (name == "medium") {
        return Difficulty::kMedium;
    }
    if (name == "hard") {
        return Difficulty::kHard;
    }
    throw std::runtime_error("config: unknown difficulty tier " + name);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_config(KeyValueConfig & kv) {
    ExperimentConfig cfg;

    cfg.dataset_manifest = kv.get_string("data.dataset", "");
    cfg.synthetic.kind = kv.get_string("data.synthetic_kind", cfg.synthetic.kind);
    cfg.synthetic.count = kv.get_int("data.synthetic_count", cfg.synthetic.count);
    cfg.synthetic.height = kv.get_int("data.height", cfg.synthetic.height);
    cfg.synthetic.width = kv.get_int("data.width", cfg.synthetic.width);
    cfg.synthetic.channels = kv.get_int("data.channels", cfg.synthetic.channels);
    cfg.synthetic.vocab_size = kv.get_int("data.K", cfg.synthetic.vocab_size);
    cfg.n_images = kv.get_int("data.n_images", cfg.n_images);

    const std::string process = kv.get_string("process.kind", "uniform");
    if (process == "masked") {
        cfg.process_kind = ProcessKind::kMasked;
    } else if (process == "uniform") {
        cfg.process_kind = ProcessKind::kUniform;
    } else {
        throw std::runtime_error("config: process.kind must be masked or uniform");
    }
    const std::string sched = kv.get_string("process.schedule", "cosine");
    if (sched == "linear") {
        cfg.schedule_kind = ScheduleKind::kLinear;
    } else if (sched == "cosine") {
        cfg.schedule_kind = ScheduleKind::kCosine;
    } else if (sched == "loglinear") {
        cfg.schedule_kind = ScheduleKind::kLogLinear;
    } else {
        throw std::runtime_error("config: process.schedule must be linear, cosine or loglinear");
    }
    cfg.schedule_floor = kv.get_double("process.floor", cfg.schedule_floor);

    cfg.prior_kind = kv.get_string("prior.kind", cfg.prior_kind);
    cfg.smoothing = kv.get_double("prior.smoothing", cfg.smoothing);
    cfg.logits_file = kv.get_string("prior.logits_file", "");

    cfg.op.kind = kv.get_string("operator.kind", cfg.op.kind);
    cfg.op.tier = parse_tier(kv.get_string("operator.tier", ""));
    cfg.op.fraction_hidden = kv.get_double("operator.fraction_hidden", cfg.op.fraction_hidden);
    cfg.op.mask_file = kv.get_string("operator.mask_file", "");
    cfg.op.box_x = kv.get_int("operator.box_x", cfg.op.box_x);
    cfg.op.box_y = kv.get_int("operator.box_y", cfg.op.box_y);
    cfg.op.box_w = kv.get_int("operator.box_w", cfg.op.box_w);
    cfg.op.box_h = kv.get_int("operator.box_h", cfg.op.box_h);
    cfg.op.pair_count = kv.get_int("operator.pairs", cfg.op.pair_count);
    cfg.op.blur_taps = kv.get_int("operator.blur_taps", cfg.op.blur_taps);
    cfg.op.blur_sigma = kv.get_double("operator.blur_sigma", cfg.op.blur_sigma);
    cfg.op.kernel_file = kv.get_string("operator.kernel_file", "");
    cfg.op.factor = kv.get_int("operator.factor", cfg.op.factor);
    cfg.op.sigma_y = kv.get_double("operator.sigma_y", cfg.op.sigma_y);

    cfg.lambda1 = kv.get_double("potential.lambda1", cfg.lambda1);
    cfg.lambda2 = kv.get_double("potential.lambda2", cfg.lambda2);
    const std::string pm = kv.get_string("potential.prior_mode", "factorized");
    if (pm == "factorized") {
        cfg.prior_mode = PriorMode::kFactorized;
    } else if (pm == "exact") {
        cfg.prior_mode = PriorMode::kExact;
    } else {
        throw std::runtime_error("config: potential.prior_mode must be factorized or exact");
    }
    const std::string lm = kv.get_string("potential.likelihood", "explicit");
    if (lm == "explicit") {
        cfg.likelihood_mode = LikelihoodMode::kExplicit;
    } else if (lm == "surrogate") {
        cfg.likelihood_mode = LikelihoodMode::kSurrogate;
    } else {
        throw std::runtime_error("config: potential.likelihood must be explicit or surrogate");
    }
    cfg.surrogate_tau = kv.get_double("potential.tau_sur", cfg.surrogate_tau);
    cfg.surrogate_file = kv.get_string("potential.surrogate_file", "");

    cfg.sampler.outer_steps = kv.get_int("sampler.T", cfg.sampler.outer_steps);
    cfg.sampler.inner_steps = kv.get_int("sampler.M", cfg.sampler.inner_steps);
    cfg.sampler.eta = kv.get_double("sampler.eta", cfg.sampler.eta);
    const std::string form = kv.get_string("sampler.proposal", "onehot");
    if (form == "index") {
        cfg.sampler.proposal_form = ProposalForm::kIndex;
    } else if (form == "onehot") {
        cfg.sampler.proposal_form = ProposalForm::kOneHot;
    } else if (form == "embedding") {
        cfg.sampler.proposal_form = ProposalForm::kEmbedding;
    } else {
        throw std::runtime_error("config: sampler.proposal must be index, onehot or embedding");
    }
    cfg.sampler.tau_start = kv.get_double("sampler.tau_start", cfg.sampler.tau_start);
    cfg.sampler.tau_end = kv.get_double("sampler.tau_end", cfg.sampler.tau_end);
    cfg.sampler.alpha_base = kv.get_double("sampler.alpha_base", cfg.sampler.alpha_base);
    cfg.sampler.alpha_min = kv.get_double("sampler.alpha_min", cfg.sampler.alpha_min);
    cfg.sampler.beta_start = kv.get_double("sampler.beta_start", cfg.sampler.beta_start);
    cfg.sampler.beta_max = kv.get_double("sampler.beta_max", cfg.sampler.beta_max);
    cfg.sampler.grad_scale_init = kv.get_double("sampler.grad_scale_init",
                                                cfg.sampler.grad_scale_init);
    cfg.sampler.grad_scale_final = kv.get_double("sampler.grad_scale_final",
                                                 cfg.sampler.grad_scale_final);
    cfg.sampler.adam.beta1 = kv.get_double("sampler.adam_beta1", cfg.sampler.adam.beta1);
    cfg.sampler.adam.beta2 = kv.get_double("sampler.adam_beta2", cfg.sampler.adam.beta2);
    cfg.sampler.adam.epsilon = kv.get_double("sampler.adam_eps", cfg.sampler.adam.epsilon);
    cfg.sampler.adam.enabled = kv.get_bool("sampler.adam_enabled", cfg.sampler.adam.enabled);
    cfg.sampler.mh = kv.get_bool("sampler.mh", cfg.sampler.mh);
    const std::string init = kv.get_string("sampler.init", "argmax");
    if (init == "argmax") {
        cfg.sampler.init_mode = CleanSampleMode::kArgmax;
    } else if (init == "ancestral") {
        cfg.sampler.init_mode = CleanSampleMode::kAncestral;
    } else {
        throw std::runtime_error("config: sampler.init must be argmax or ancestral");
    }

    cfg.n_chains = kv.get_int("run.n_chains", cfg.n_chains);
    cfg.seed = kv.get_u64("run.seed", cfg.seed);
    cfg.out_dir = kv.get_string("run.out", cfg.out_dir);

    kv.finish();
    cfg.sampler.validate();
    return cfg;
}

void ExperimentConfig::echo(const std::string & path) const {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("config echo: cannot open " + path);
    }
    os << "[data]\n";
    if (!dataset_manifest.empty()) {
        os << "dataset = " << dataset_manifest << "\n";
    }
    os << "synthetic_kind = " << synthetic.kind << "\n";
    os << "synthetic_count = " << synthetic.count << "\n";
    os << "height = " << synthetic.height << "\nwidth = " << synthetic.width
       << "\nchannels = " << synthetic.channels << "\nK = " << synthetic.vocab_size << "\n";
    os << "n_images = " << n_images << "\n\n";
    os << "[process]\n";
    os << "kind = " << (process_kind == ProcessKind::kMasked ? "masked" : "uniform") << "\n";
    os << "schedule = "
       << (schedule_kind == ScheduleKind::kLinear
               ? "linear"
               : schedule_kind == ScheduleKind::kCosine ? "cosine" : "loglinear")
       << "\n";
    os << "floor = " << schedule_floor << "\n\n";
    os << "[prior]\nkind = " << prior_kind << "\nsmoothing = " << smoothing << "\n";
    if (!logits_file.empty()) {
        os << "logits_file = " << logits_file << "\n";
    }
    os << "\n[operator]\nkind = " << op.kind << "\nsigma_y = " << effective_sigma() << "\n";
    if (op.kind == "inpaint") {
        os << "fraction_hidden = " << effective_fraction_hidden() << "\n";
        if (!op.mask_file.empty()) {
            os << "mask_file = " << op.mask_file << "\n";
        }
    } else if (op.kind == "xor" || op.kind == "and") {
        os << "pairs = " << op.pair_count << "\n";
    } else if (op.kind == "gaussian_blur") {
        os << "blur_taps = " << op.blur_taps << "\nblur_sigma = " << op.blur_sigma << "\n";
    } else if (op.kind == "motion_blur") {
        os << "kernel_file = " << op.kernel_file << "\n";
    } else if (op.kind == "downsample") {
        os << "factor = " << op.factor << "\n";
    }
    os << "\n[potential]\nlambda1 = " << lambda1 << "\nlambda2 = " << effective_lambda2()
       << "\nprior_mode = " << (prior_mode == PriorMode::kExact ? "exact" : "factorized")
       << "\nlikelihood = "
       << (likelihood_mode == LikelihoodMode::kSurrogate ? "surrogate" : "explicit") << "\n";
    if (!surrogate_file.empty()) {
        os << "surrogate_file = " << surrogate_file << "\ntau_sur = " << surrogate_tau << "\n";
    }
    os << "\n[sampler]\nT = " << sampler.outer_steps << "\nM = " << sampler.inner_steps
       << "\neta = " << sampler.eta << "\nproposal = "
       << (sampler.proposal_form == ProposalForm::kIndex
               ? "index"
               : sampler.proposal_form == ProposalForm::kOneHot ? "onehot" : "embedding")
       << "\ntau_start = " << sampler.tau_start << "\ntau_end = " << sampler.tau_end
       << "\nbeta_start = " << sampler.beta_start << "\nbeta_max = " << sampler.beta_max
       << "\ngrad_scale_init = " << sampler.grad_scale_init
       << "\ngrad_scale_final = " << sampler.grad_scale_final
       << "\nalpha_base = " << sampler.alpha_base << "\nalpha_min = " << sampler.alpha_min
       << "\nadam_beta1 = " << sampler.adam.beta1 << "\nadam_beta2 = " << sampler.adam.beta2
       << "\nadam_eps = " << sampler.adam.epsilon
       << "\nadam_enabled = " << (sampler.adam.enabled ? "true" : "false")
       << "\nmh = " << (sampler.mh ? "true" : "false") << "\ninit = "
       << (sampler.init_mode == CleanSampleMode::kArgmax ? "argmax" : "ancestral") << "\n";
    os << "\n[run]\nn_chains = " << n_chains << "\nseed = " << seed << "\nout = " << out_dir
       << "\n";
}

}  // namespace dlps
