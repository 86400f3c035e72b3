#pragma once

#include "rose/attacks.hpp"
#include "rose/bytes.hpp"
#include "rose/config.hpp"
#include "rose/dataset.hpp"
#include "rose/image.hpp"
#include "rose/jpeg.hpp"
#include "rose/keying.hpp"
#include "rose/nn.hpp"
#include "rose/protocol.hpp"
#include "rose/rng.hpp"
#include "rose/sha256.hpp"
#include "rose/stats.hpp"
#include "rose/synth.hpp"
#include "rose/usurper.hpp"
#include "rose/watermark.hpp"
#include "rose/wire.hpp"
