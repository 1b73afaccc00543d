#include <doctest.h>

#include "refdepth/config.hpp"
