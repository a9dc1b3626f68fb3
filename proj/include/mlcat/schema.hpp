#pragma once

// Label schema: an ordered list of fine-grained categories plus a merge map
// onto a coarser label space. The default schema is the 23-category sexism
// taxonomy merged down to the 14 classes used for classification.
//
// Schema file format, one entry per line, '#' starts a comment:
//   Category name                  (maps to itself)
//   Category name -> Parent name   (merged into Parent name)
// Fine categories keep file order; coarse labels are ordered by first
// appearance of their image.

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlcat/error.hpp"

namespace mlcat {

using LabelSet = std::set<std::size_t>;

namespace detail {
inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

class LabelSchema {
 public:
  LabelSchema() = default;

  // pairs of (fine name, coarse name)
  explicit LabelSchema(const std::vector<std::pair<std::string, std::string>>& entries) {
    if (entries.empty()) throw Error(ErrorKind::schema, "schema has no categories");
    for (auto& [child, parent] : entries) {
      if (fine_index_.count(child))
        throw Error(ErrorKind::schema, "duplicate category '" + child + "'");
      fine_index_[child] = fine_.size();
      fine_.push_back(child);
      auto it = coarse_index_.find(parent);
      if (it == coarse_index_.end()) {
        it = coarse_index_.emplace(parent, coarse_.size()).first;
        coarse_.push_back(parent);
      }
      merge_.push_back(it->second);
    }
  }

  static LabelSchema sexism() {
    return LabelSchema({
        {"Role stereotyping", "Role stereotyping"},
        {"Attribute stereotyping", "Attribute stereotyping"},
        {"Body shaming", "Body shaming"},
        {"Hyper-sexualization (excluding body shaming)",
         "Hyper-sexualization (excluding body shaming)"},
        {"Internalized sexism", "Internalized sexism"},
        {"Pay gap", "Hostile work environment"},
        {"Hostile work environment (excluding pay gap)", "Hostile work environment"},
        {"Denial or trivialization of sexist misconduct",
         "Denial or trivialization of sexist misconduct"},
        {"Threats", "Threats"},
        {"Rape", "Sexual assault"},
        {"Sexual assault (excluding rape)", "Sexual assault"},
        {"Sexual harassment (excluding assault)", "Sexual harassment (excluding assault)"},
        {"Tone policing", "Moral policing and victim blaming"},
        {"Moral policing (excluding tone policing)", "Moral policing and victim blaming"},
        {"Victim blaming", "Moral policing and victim blaming"},
        {"Slut shaming", "Slut shaming"},
        {"Motherhood-related discrimination",
         "Motherhood and menstruation related discrimination"},
        {"Menstruation-related discrimination",
         "Motherhood and menstruation related discrimination"},
        {"Religion-based sexism", "Other"},
        {"Physical violence (excluding sexual violence)", "Other"},
        {"Mansplaining", "Other"},
        {"Gaslighting", "Other"},
        {"Other", "Other"},
    });
  }

  static LabelSchema parse(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      auto arrow = line.find("->");
      if (arrow == std::string::npos) {
        entries.emplace_back(line, line);
      } else {
        auto child = detail::trim(line.substr(0, arrow));
        auto parent = detail::trim(line.substr(arrow + 2));
        if (child.empty() || parent.empty())
          throw Error(ErrorKind::schema,
                      "schema line " + std::to_string(lineno) + ": empty name");
        entries.emplace_back(child, parent);
      }
    }
    return LabelSchema(entries);
  }

  static LabelSchema load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open schema file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  std::string to_text() const {
    std::string out;
    for (std::size_t i = 0; i < fine_.size(); ++i) {
      out += fine_[i];
      if (coarse_[merge_[i]] != fine_[i]) out += " -> " + coarse_[merge_[i]];
      out += '\n';
    }
    return out;
  }

  const std::vector<std::string>& fine() const { return fine_; }
  const std::vector<std::string>& coarse() const { return coarse_; }
  std::size_t fine_size() const { return fine_.size(); }
  std::size_t coarse_size() const { return coarse_.size(); }
  std::size_t parent_of(std::size_t fine_id) const { return merge_.at(fine_id); }

  std::size_t fine_index(const std::string& name) const {
    auto it = fine_index_.find(name);
    if (it == fine_index_.end())
      throw Error(ErrorKind::schema, "unknown category '" + name + "'");
    return it->second;
  }

  std::size_t coarse_index(const std::string& name) const {
    auto it = coarse_index_.find(name);
    if (it == coarse_index_.end())
      throw Error(ErrorKind::schema, "unknown merged category '" + name + "'");
    return it->second;
  }

  LabelSet merge(const LabelSet& fine_ids) const {
    LabelSet out;
    for (auto id : fine_ids) {
      if (id >= merge_.size())
        throw Error(ErrorKind::schema, "category id " + std::to_string(id) + " out of range");
      out.insert(merge_[id]);
    }
    return out;
  }

  std::vector<std::string> merge_labels(const std::vector<std::string>& names) const {
    LabelSet ids;
    for (auto& n : names) ids.insert(fine_index(n));
    std::vector<std::string> out;
    for (auto id : merge(ids)) out.push_back(coarse_[id]);
    return out;
  }

  bool operator==(const LabelSchema& o) const {
    return fine_ == o.fine_ && coarse_ == o.coarse_ && merge_ == o.merge_;
  }

 private:
  std::vector<std::string> fine_, coarse_;
  std::vector<std::size_t> merge_;
  std::map<std::string, std::size_t> fine_index_, coarse_index_;
};

}  // namespace mlcat
