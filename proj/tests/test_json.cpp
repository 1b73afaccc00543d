#include <doctest.h>

#include "refdepth/json_io.hpp"
