#include "pfinv/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "pfinv/errors.hpp"

namespace pfinv {

namespace {

// Recursive descent over expr := term (('+'|'-') term)*, term := unary
// (('*'|'/') unary)*, unary := ('-'|'+') unary | number | pi | '(' expr ')'.
class ExpressionParser {
 public:
  explicit ExpressionParser(const std::string& text) : text_(text) {}

  double parse() {
    const double v = expr();
    skip();
    if (pos_ != text_.size()) fail();
    return v;
  }

 private:
  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail() const { throw ValidationError("cannot evaluate '" + text_ + "'"); }

  double expr() {
    double v = term();
    for (;;) {
      if (accept('+')) {
        v += term();
      } else if (accept('-')) {
        v -= term();
      } else {
        return v;
      }
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (accept('*')) {
        v *= unary();
      } else if (accept('/')) {
        v /= unary();
      } else {
        return v;
      }
    }
  }
  double unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    if (accept('(')) {
      const double v = expr();
      if (!accept(')')) fail();
      return v;
    }
    skip();
    if (text_.compare(pos_, 2, "pi") == 0) {
      pos_ += 2;
      return std::acos(-1.0);
    }
    const char* begin = text_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail();
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Shape make_shape(const std::string& kind, const std::vector<double>& a, const std::string& text) {
  auto need = [&](std::size_t n) {
    if (a.size() != n) throw ValidationError("shape '" + text + "' needs " + std::to_string(n) + " numbers");
  };
  if (kind == "disc") {
    need(3);
    return Disc{{a[0], a[1]}, a[2]};
  }
  if (kind == "ellipse") {
    need(5);
    return Ellipse{{a[0], a[1]}, a[2], a[3], a[4]};
  }
  if (kind == "rectangle") {
    need(4);
    return Rectangle{{a[0], a[1]}, a[2], a[3]};
  }
  if (kind == "polygon") {
    if (a.size() < 6 || a.size() % 2 != 0) throw ValidationError("polygon '" + text + "' needs x,y pairs");
    PolygonShape p;
    for (std::size_t i = 0; i < a.size(); i += 2) p.vertices.push_back({a[i], a[i + 1]});
    return p;
  }
  throw ValidationError("unknown shape kind '" + kind + "'");
}

std::string format_number(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string format_source(const SourceTerm& s) {
  std::ostringstream out;
  out << std::setprecision(17);
  bool first = true;
  auto put = [&](double c, const char* var) {
    if (c == 0.0) return;
    if (!first) out << (c < 0 ? " - " : " + ");
    else if (c < 0) out << '-';
    out << std::abs(c);
    if (*var != '\0') out << '*' << var;
    first = false;
  };
  put(s.a, "x");
  put(s.b, "y");
  put(s.c, "");
  if (first) out << '0';
  return out.str();
}

using Tree = boost::property_tree::ptree;

class Reader {
 public:
  explicit Reader(const Tree& tree) : tree_(tree) {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) throw ValidationError("key '" + section + "' outside any section");
      for (const auto& kv : body) {
        if (!kv.second.empty()) throw ValidationError("nested keys are not supported");
        unused_.insert(section + "." + kv.first);
      }
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    const auto v = tree_.get_optional<std::string>(Tree::path_type(key, '.'));
    if (v) unused_.erase(key);
    return v ? std::optional<std::string>(trim(*v)) : std::nullopt;
  }
  void number(const std::string& key, double& out) {
    if (auto v = raw(key)) out = evaluate_expression(*v);
  }
  void integer(const std::string& key, int& out) {
    if (auto v = raw(key)) {
      const double d = evaluate_expression(*v);
      if (d != std::floor(d) || std::abs(d) > 1e9) throw ValidationError(key + " must be an integer");
      out = static_cast<int>(d);
    }
  }
  void flag(const std::string& key, bool& out) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
        out = false;
      } else {
        throw ValidationError(key + " must be true or false");
      }
    }
  }
  const std::set<std::string>& unused() const { return unused_; }

 private:
  const Tree& tree_;
  std::set<std::string> unused_;
};

}  // namespace

double evaluate_expression(const std::string& text) {
  const double v = ExpressionParser(text).parse();
  if (!std::isfinite(v)) throw ValidationError("'" + text + "' is not finite");
  return v;
}

std::vector<Shape> parse_shapes(const std::string& text) {
  std::vector<Shape> out;
  for (const std::string& item : split(text, ';')) {
    const auto open = item.find('(');
    if (open == std::string::npos || item.back() != ')') throw ValidationError("bad shape '" + item + "'");
    const std::string kind = trim(item.substr(0, open));
    std::vector<double> args;
    for (const std::string& a : split(item.substr(open + 1, item.size() - open - 2), ',')) {
      args.push_back(evaluate_expression(a));
    }
    out.push_back(make_shape(kind, args, item));
  }
  return out;
}

std::string format_shape(const Shape& shape) {
  std::ostringstream out;
  auto list = [&](std::initializer_list<double> v) {
    bool first = true;
    for (double x : v) {
      out << (first ? "" : ", ") << format_number(x);
      first = false;
    }
  };
  if (const auto* d = std::get_if<Disc>(&shape)) {
    out << "disc(";
    list({d->center.x, d->center.y, d->radius});
  } else if (const auto* e = std::get_if<Ellipse>(&shape)) {
    out << "ellipse(";
    list({e->center.x, e->center.y, e->semi_a, e->semi_b, e->angle});
  } else if (const auto* r = std::get_if<Rectangle>(&shape)) {
    out << "rectangle(";
    list({r->corner.x, r->corner.y, r->width, r->height});
  } else {
    out << "polygon(";
    const auto& p = std::get<PolygonShape>(shape);
    for (std::size_t i = 0; i < p.vertices.size(); ++i) {
      out << (i ? ", " : "") << format_number(p.vertices[i].x) << ", " << format_number(p.vertices[i].y);
    }
  }
  out << ')';
  return out.str();
}

void ReconstructionConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(what);
  };
  require(h_target > 0.0 && h_target <= 2.0, "problem.h must lie in (0, 2]");
  require(k > 0.0 && k < 1.0, "problem.k must lie in (0, 1)");
  require(!sources.empty(), "problem.sources must name at least one source");
  require(noise >= 0.0, "problem.noise must be non-negative");
  require(collar >= 0.0, "phantom.collar must be non-negative");
  require(pop.alpha > 0.0, "pop.alpha must be positive");
  require(pop.epsilon > 0.0, "pop.epsilon must be positive");
  require(pop.tau >= 0.0 && pop.tau_factor > 0.0 && pop.initial_tau() > 0.0, "pop time step must be positive");
  require(pop.tol > 0.0, "pop.tol must be positive");
  require(pop.max_iterations >= 1, "pop.max_iterations must be at least 1");
  require(pop.adapt_every >= 1 && pop.adapt_levels >= 1, "pop adaptation cadence must be positive");
  require(pop.snapshot_every >= 0, "snapshot cadence must be non-negative");
  require(shape.gradient.alpha > 0.0, "shape.alpha must be positive");
  require(shape.tol > 0.0, "shape.tol must be positive");
  require(shape.max_step > 0.0, "shape.max_step must be positive");
  require(shape.max_iterations >= 1, "shape.max_iterations must be at least 1");
  require(!shape_initial.empty(), "shape.initial must name at least one shape");
  require(shape_points >= 8, "shape.points must be at least 8");
  for (double e : sweep_epsilon) require(e > 0.0, "sweep.epsilon values must be positive");
}

ReconstructionConfig parse_config(std::istream& in) {
  Tree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  Reader r(tree);
  ReconstructionConfig c;

  r.number("problem.h", c.h_target);
  r.number("problem.k", c.k);
  r.number("problem.noise", c.noise);
  if (auto v = r.raw("problem.seed")) {
    const double s = evaluate_expression(*v);
    if (s < 0 || s != std::floor(s)) throw ValidationError("problem.seed must be a non-negative integer");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = r.raw("problem.sources")) {
    c.sources.clear();
    for (const std::string& s : split(*v, ';')) c.sources.push_back(SourceTerm::parse(s));
  }

  if (auto v = r.raw("phantom.shapes")) {
    c.phantom = parse_shapes(*v);
    c.has_phantom = true;
  }
  r.number("phantom.collar", c.collar);

  r.number("pop.alpha", c.pop.alpha);
  r.number("pop.epsilon", c.pop.epsilon);
  r.number("pop.tau", c.pop.tau);
  r.number("pop.tau_factor", c.pop.tau_factor);
  r.number("pop.tau_max", c.pop.tau_max);
  r.number("pop.tol", c.pop.tol);
  r.integer("pop.max_iterations", c.pop.max_iterations);
  r.integer("pop.max_rejections", c.pop.max_rejections);
  r.flag("pop.adapt", c.pop.adapt);
  r.integer("pop.adapt_every", c.pop.adapt_every);
  r.integer("pop.adapt_levels", c.pop.adapt_levels);
  r.number("pop.refine_fraction", c.pop.refine_frac);
  r.number("pop.coarsen_fraction", c.pop.coarsen_frac);

  r.number("shape.alpha", c.shape.gradient.alpha);
  r.number("shape.max_step", c.shape.max_step);
  r.number("shape.tol", c.shape.tol);
  r.integer("shape.max_iterations", c.shape.max_iterations);
  r.number("shape.smoothing_length", c.shape.gradient.smoothing_length);
  r.flag("shape.weight_curvature", c.shape.gradient.weight_curvature);
  if (auto v = r.raw("shape.initial")) c.shape_initial = parse_shapes(*v);
  r.integer("shape.points", c.shape_points);

  if (auto v = r.raw("sweep.epsilon")) {
    for (const std::string& e : split(*v, ';')) c.sweep_epsilon.push_back(evaluate_expression(e));
  }

  r.flag("verify.corrupt_gradient", c.corrupt_gradient);
  r.integer("output.snapshot_every", c.pop.snapshot_every);

  if (!r.unused().empty()) throw ValidationError("config: unknown key '" + *r.unused().begin() + "'");
  c.pop.k = c.k;
  c.shape.gradient.k = c.k;
  c.shape.gradient.collar = c.collar;
  c.validate();
  return c;
}

ReconstructionConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path);
  return parse_config(in);
}

void write_config(std::ostream& out, const ReconstructionConfig& c) {
  auto join_shapes = [](const std::vector<Shape>& shapes) {
    std::string s;
    for (const Shape& sh : shapes) s += (s.empty() ? "" : "; ") + format_shape(sh);
    return s;
  };
  auto num = format_number;
  out << "[problem]\n";
  out << "h = " << num(c.h_target) << "\n";
  out << "k = " << num(c.k) << "\n";
  std::string src;
  for (const SourceTerm& s : c.sources) src += (src.empty() ? "" : "; ") + format_source(s);
  out << "sources = " << src << "\n";
  out << "noise = " << num(c.noise) << "\n";
  out << "seed = " << c.seed << "\n\n";
  out << "[phantom]\n";
  if (c.has_phantom) out << "shapes = " << join_shapes(c.phantom) << "\n";
  out << "collar = " << num(c.collar) << "\n\n";
  out << "[pop]\n";
  out << "alpha = " << num(c.pop.alpha) << "\n";
  out << "epsilon = " << num(c.pop.epsilon) << "\n";
  out << "tau = " << num(c.pop.tau) << "\n";
  out << "tau_factor = " << num(c.pop.tau_factor) << "\n";
  out << "tau_max = " << num(c.pop.tau_max) << "\n";
  out << "tol = " << num(c.pop.tol) << "\n";
  out << "max_iterations = " << c.pop.max_iterations << "\n";
  out << "max_rejections = " << c.pop.max_rejections << "\n";
  out << "adapt = " << (c.pop.adapt ? "true" : "false") << "\n";
  out << "adapt_every = " << c.pop.adapt_every << "\n";
  out << "adapt_levels = " << c.pop.adapt_levels << "\n";
  out << "refine_fraction = " << num(c.pop.refine_frac) << "\n";
  out << "coarsen_fraction = " << num(c.pop.coarsen_frac) << "\n\n";
  out << "[shape]\n";
  out << "alpha = " << num(c.shape.gradient.alpha) << "\n";
  out << "max_step = " << num(c.shape.max_step) << "\n";
  out << "tol = " << num(c.shape.tol) << "\n";
  out << "max_iterations = " << c.shape.max_iterations << "\n";
  out << "smoothing_length = " << num(c.shape.gradient.smoothing_length) << "\n";
  out << "weight_curvature = " << (c.shape.gradient.weight_curvature ? "true" : "false") << "\n";
  out << "initial = " << join_shapes(c.shape_initial) << "\n";
  out << "points = " << c.shape_points << "\n\n";
  out << "[sweep]\n";
  if (!c.sweep_epsilon.empty()) {
    std::string e;
    for (double v : c.sweep_epsilon) e += (e.empty() ? "" : "; ") + num(v);
    out << "epsilon = " << e << "\n";
  }
  out << "\n[verify]\n";
  out << "corrupt_gradient = " << (c.corrupt_gradient ? "true" : "false") << "\n\n";
  out << "[output]\n";
  out << "snapshot_every = " << c.pop.snapshot_every << "\n";
}

}  // namespace pfinv
