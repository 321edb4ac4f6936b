#pragma once

#include "chipledger/bigint.hpp"
#include "chipledger/bundled_scenarios.hpp"
#include "chipledger/bytes.hpp"
#include "chipledger/chip_model.hpp"
#include "chipledger/entropy.hpp"
#include "chipledger/error.hpp"
#include "chipledger/identity.hpp"
#include "chipledger/ledger.hpp"
#include "chipledger/network_sim.hpp"
#include "chipledger/rng.hpp"
#include "chipledger/scenario.hpp"
#include "chipledger/sha256.hpp"
#include "chipledger/strings.hpp"
