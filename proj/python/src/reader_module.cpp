#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "geopatch/tensor_store.hpp"

namespace py = pybind11;
using namespace geopatch;

namespace {

py::dtype numpy_dtype(DType dtype) {
  switch (dtype) {
    case DType::U8: return py::dtype("uint8");
    case DType::U16: return py::dtype("<u2");
    case DType::I16: return py::dtype("<i2");
    case DType::I32: return py::dtype("<i4");
    case DType::F32: return py::dtype("<f4");
    case DType::F64: return py::dtype("<f8");
  }
  throw DataError("unsupported dtype");
}

// One reader per view. Calls are serialized, so a view may be shared
// between Python threads; separate processes should open their own.
class View {
 public:
  explicit View(const std::string& path) : reader_(std::filesystem::path(path)) {}

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return reader_.size();
  }

  std::vector<std::string> keys() const {
    std::lock_guard lock(mutex_);
    return reader_.keys();
  }

  py::bytes raw(const std::string& key) const {
    std::lock_guard lock(mutex_);
    const auto snapshot = reader_.snapshot();
    const auto value = snapshot.get(key);
    if (!value) throw KeyNotFoundError(key);
    return py::bytes(reinterpret_cast<const char*>(value->data()), value->size());
  }

  py::dict get(const std::string& key) const {
    TensorRecord record;
    {
      std::lock_guard lock(mutex_);
      record = reader_.read_record(key);
    }
    py::dict out;
    for (const auto& [name, tensor] : record.tensors) {
      std::vector<py::ssize_t> shape(tensor.shape.begin(), tensor.shape.end());
      py::array array(numpy_dtype(tensor.dtype), shape);
      if (!tensor.data.empty()) std::memcpy(array.mutable_data(), tensor.data.data(), tensor.data.size());
      out[py::str(name)] = array;
    }
    return out;
  }

 private:
  StoreReader reader_;
  mutable std::mutex mutex_;
};

}  // namespace

PYBIND11_MODULE(_native, m) {
  py::register_exception<KeyNotFoundError>(m, "KeyNotFoundError", PyExc_KeyError);
  py::register_exception<IoError>(m, "NotAStoreError", PyExc_OSError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::class_<View>(m, "View")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def("__len__", &View::size)
      .def("keys", &View::keys)
      .def("raw", &View::raw, py::arg("key"))
      .def("get", &View::get, py::arg("key"));
}
