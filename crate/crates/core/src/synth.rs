//! Deterministic synthetic BOM corpus with ground-truth substitute families.
//!
//! Component types are tiered (machines, assembly tiers, leaf parts) and a
//! parent always sits on a strictly lower tier than its child, so connected
//! components never share a type. Substitute families live inside one leaf
//! type and differ only by supplier, small numeric jitter and unit spelling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::io;
use crate::graph::{
    AttrValue, BomEdge, BomTree, ComponentNode, MachineKnowledgeGraph, PartIdentifier,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub machines: usize,
    pub machine_types: usize,
    pub assembly_types: usize,
    pub leaf_types: usize,
    /// Catalog size over all leaf types, family members included.
    pub leaf_parts: usize,
    /// Exact number of ground-truth substitute pairs.
    pub substitute_pairs: usize,
    pub max_family_size: usize,
    /// Levels from machine root to deepest leaf, at most 10.
    pub max_depth: usize,
    /// Probability that an assembly slot reuses an existing assembly.
    pub sharing_rate: f64,
    /// Probability that a family member spells its measure in the other unit.
    pub unit_variant_rate: f64,
    /// Probability that a leaf slot filled from a family also lists a second
    /// member as an approved alternate under the same parent.
    pub alternate_rate: f64,
    pub leaf_slots_min: usize,
    pub leaf_slots_max: usize,
    /// Upper bound on child-assembly slots per assembly.
    pub child_assemblies_max: usize,
    pub machine_slots_min: usize,
    pub machine_slots_max: usize,
    /// Part groups a leaf slot draws from.
    pub slot_groups_min: usize,
    pub slot_groups_max: usize,
    /// Distinct `series` codes per type.
    pub series_per_type: usize,
    /// Attach every otherwise unused catalog part to some assembly.
    pub use_all_parts: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SynthConfig {
    /// Roughly 2,000 entities and 400 substitute pairs.
    pub fn desk() -> Self {
        Self {
            seed: 7,
            machines: 120,
            machine_types: 4,
            assembly_types: 10,
            leaf_types: 26,
            leaf_parts: 1250,
            substitute_pairs: 400,
            max_family_size: 4,
            max_depth: 5,
            sharing_rate: 0.5,
            unit_variant_rate: 0.15,
            alternate_rate: 0.3,
            leaf_slots_min: 4,
            leaf_slots_max: 9,
            child_assemblies_max: 2,
            machine_slots_min: 3,
            machine_slots_max: 6,
            slot_groups_min: 2,
            slot_groups_max: 5,
            series_per_type: 3,
            use_all_parts: true,
        }
    }

    /// Sized after the original corpus: 1,721 configurations, about 11,270
    /// entities, 254 types and 1,613 substitute pairs.
    pub fn full() -> Self {
        Self {
            seed: 7,
            machines: 1721,
            machine_types: 12,
            assembly_types: 42,
            leaf_types: 200,
            leaf_parts: 6200,
            substitute_pairs: 1613,
            max_depth: 6,
            sharing_rate: 0.72,
            leaf_slots_min: 5,
            leaf_slots_max: 12,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(config_err(format!("unknown synth preset {other:?} (expected desk or full)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(config_err(msg.to_string())) };
        check(self.max_depth >= 3 && self.max_depth <= 10, "synth.max_depth must lie in [3, 10]")?;
        check(self.machine_types >= 1, "synth.machine_types must be positive")?;
        check(self.machines >= self.machine_types, "synth.machines must be at least synth.machine_types")?;
        check(
            self.assembly_types >= self.max_depth - 2,
            "synth.assembly_types must cover every assembly tier (max_depth - 2)",
        )?;
        check(self.leaf_types >= 1, "synth.leaf_types must be positive")?;
        check((0.0..=1.0).contains(&self.sharing_rate), "synth.sharing_rate must lie in [0, 1]")?;
        check(
            (0.0..=1.0).contains(&self.unit_variant_rate),
            "synth.unit_variant_rate must lie in [0, 1]",
        )?;
        check((0.0..=1.0).contains(&self.alternate_rate), "synth.alternate_rate must lie in [0, 1]")?;
        check(self.max_family_size >= 2, "synth.max_family_size must be at least 2")?;
        check(
            self.max_family_size <= SUPPLIERS.len(),
            "synth.max_family_size exceeds the supplier pool",
        )?;
        check(
            self.leaf_slots_min >= 1 && self.leaf_slots_min <= self.leaf_slots_max,
            "synth.leaf_slots_min must be in [1, leaf_slots_max]",
        )?;
        check(
            self.machine_slots_min >= 1 && self.machine_slots_min <= self.machine_slots_max,
            "synth.machine_slots_min must be in [1, machine_slots_max]",
        )?;
        check(
            self.slot_groups_min >= 1 && self.slot_groups_min <= self.slot_groups_max,
            "synth.slot_groups_min must be in [1, slot_groups_max]",
        )?;
        check(self.series_per_type >= 1, "synth.series_per_type must be positive")?;
        Ok(())
    }

    fn assembly_tiers(&self) -> usize {
        self.max_depth - 2
    }
}

#[derive(Debug, Clone, Copy)]
enum Key {
    Cat(&'static str, &'static [&'static str]),
    /// Numeric drawn from fixed levels.
    Levels(&'static str, &'static [f64]),
    /// Numeric in a base unit with an alternative unit `factor` times larger.
    Measure {
        key: &'static str,
        unit_key: &'static str,
        values: &'static [f64],
        units: (&'static str, &'static str),
        factor: f64,
    },
    /// Continuous numeric that family members jitter by up to 2%.
    Soft(&'static str, f64, f64, i32),
}

struct Archetype {
    name: &'static str,
    families: bool,
    keys: &'static [Key],
}

const BUS: &[&str] = &["PCIe Gen3 x8", "PCIe Gen4 x16", "PCIe Gen5 x16", "OCP 3.0"];
const PACKAGE: &[&str] = &["0201", "0402", "0603", "0805", "1206"];

const LEAF_ARCHETYPES: &[Archetype] = &[
    Archetype {
        name: "SSD",
        families: true,
        keys: &[
            Key::Cat("interface", &["SATA", "SAS", "NVMe"]),
            Key::Cat("form_factor", &["2.5in", "M.2 2280", "U.2", "E1.S", "E3.S"]),
            Key::Cat("nand", &["TLC", "QLC", "MLC", "SLC"]),
            Key::Cat("endurance", &["read-intensive", "mixed-use", "write-intensive"]),
            Key::Measure {
                key: "capacity",
                unit_key: "capacity_unit",
                values: &[240.0, 480.0, 960.0, 1920.0, 3840.0, 7680.0, 15360.0],
                units: ("GB", "TB"),
                factor: 1000.0,
            },
            Key::Soft("power_w", 4.0, 25.0, 1),
            Key::Cat("encryption", &["SED", "FIPS", "none"]),
            Key::Levels("dwpd", &[0.3, 1.0, 3.0, 10.0]),
        ],
    },
    Archetype {
        name: "HDD",
        families: true,
        keys: &[
            Key::Cat("interface", &["SATA", "SAS", "NL-SAS"]),
            Key::Levels("rpm", &[5400.0, 7200.0, 10000.0, 15000.0]),
            Key::Measure {
                key: "capacity",
                unit_key: "capacity_unit",
                values: &[1000.0, 2000.0, 4000.0, 8000.0, 12000.0, 16000.0, 20000.0],
                units: ("GB", "TB"),
                factor: 1000.0,
            },
            Key::Cat("form_factor", &["2.5in", "3.5in"]),
            Key::Levels("cache_mb", &[64.0, 128.0, 256.0, 512.0]),
            Key::Soft("power_w", 5.0, 12.0, 1),
            Key::Cat("recording", &["CMR", "SMR"]),
        ],
    },
    Archetype {
        name: "CPU",
        families: true,
        keys: &[
            Key::Cat("socket", &["LGA3647", "LGA4189", "LGA4677", "SP3", "SP5"]),
            Key::Levels("cores", &[8.0, 12.0, 16.0, 24.0, 28.0, 32.0, 48.0, 64.0, 96.0]),
            Key::Measure {
                key: "base_clock",
                unit_key: "clock_unit",
                values: &[2000.0, 2100.0, 2300.0, 2400.0, 2600.0, 2800.0, 3000.0, 3200.0],
                units: ("MHz", "GHz"),
                factor: 1000.0,
            },
            Key::Levels("tdp_w", &[105.0, 125.0, 150.0, 165.0, 205.0, 225.0, 250.0, 280.0, 350.0]),
            Key::Levels("l3_cache_mb", &[16.0, 32.0, 64.0, 128.0, 256.0]),
            Key::Cat("isa", &["x86-64", "aarch64"]),
            Key::Cat("stepping", &["A0", "B0", "B1", "C0"]),
        ],
    },
    Archetype {
        name: "DIMM",
        families: true,
        keys: &[
            Key::Measure {
                key: "capacity",
                unit_key: "capacity_unit",
                values: &[8192.0, 16384.0, 32768.0, 65536.0, 131072.0],
                units: ("MB", "GB"),
                factor: 1024.0,
            },
            Key::Levels("speed_mts", &[2400.0, 2666.0, 2933.0, 3200.0, 4400.0, 4800.0, 5600.0]),
            Key::Cat("module", &["RDIMM", "LRDIMM", "UDIMM", "3DS-RDIMM"]),
            Key::Cat("ranks", &["1R", "2R", "4R", "8R"]),
            Key::Cat("generation", &["DDR4", "DDR5"]),
            Key::Soft("power_w", 3.0, 12.0, 1),
        ],
    },
    Archetype {
        name: "NIC",
        families: true,
        keys: &[
            Key::Levels("ports", &[1.0, 2.0, 4.0]),
            Key::Measure {
                key: "speed",
                unit_key: "speed_unit",
                values: &[1000.0, 10000.0, 25000.0, 100000.0, 200000.0],
                units: ("Mbps", "Gbps"),
                factor: 1000.0,
            },
            Key::Cat("connector", &["RJ45", "SFP+", "SFP28", "QSFP28", "QSFP56"]),
            Key::Cat("bus", BUS),
            Key::Cat("offload", &["RDMA", "iWARP", "none"]),
            Key::Soft("power_w", 5.0, 25.0, 1),
        ],
    },
    Archetype {
        name: "PSU",
        families: true,
        keys: &[
            Key::Measure {
                key: "output",
                unit_key: "output_unit",
                values: &[550.0, 750.0, 800.0, 1100.0, 1400.0, 1600.0, 2000.0, 2400.0],
                units: ("W", "kW"),
                factor: 1000.0,
            },
            Key::Cat("efficiency", &["Gold", "Platinum", "Titanium"]),
            Key::Cat("input", &["AC", "HVDC", "-48VDC"]),
            Key::Cat("form", &["CRPS", "M-CRPS", "flex"]),
            Key::Levels("hold_up_ms", &[10.0, 12.0, 16.0, 20.0]),
            Key::Soft("weight_kg", 0.6, 1.5, 2),
        ],
    },
    Archetype {
        name: "FAN",
        families: true,
        keys: &[
            Key::Levels("size_mm", &[40.0, 60.0, 80.0, 92.0, 120.0]),
            Key::Levels("max_rpm", &[8000.0, 12000.0, 16000.0, 21000.0, 25000.0]),
            Key::Soft("airflow_cfm", 10.0, 120.0, 1),
            Key::Cat("bearing", &["ball", "sleeve", "FDB"]),
            Key::Cat("connector", &["4-pin", "6-pin", "8-pin"]),
            Key::Cat("rotor", &["single", "dual"]),
        ],
    },
    Archetype {
        name: "GPU",
        families: true,
        keys: &[
            Key::Measure {
                key: "memory",
                unit_key: "memory_unit",
                values: &[16384.0, 24576.0, 32768.0, 49152.0, 81920.0],
                units: ("MB", "GB"),
                factor: 1024.0,
            },
            Key::Levels("tdp_w", &[70.0, 150.0, 250.0, 300.0, 350.0, 400.0, 700.0]),
            Key::Cat("form", &["FHFL", "FHHL", "SXM", "OAM"]),
            Key::Cat("cooling", &["passive", "active"]),
            Key::Cat("bus", BUS),
            Key::Cat("memory_type", &["GDDR6", "HBM2e", "HBM3"]),
        ],
    },
    Archetype {
        name: "RAID_CONTROLLER",
        families: true,
        keys: &[
            Key::Cat("raid_levels", &["0/1/10", "0/1/5/10", "0/1/5/6/10/50/60"]),
            Key::Measure {
                key: "cache",
                unit_key: "cache_unit",
                values: &[1024.0, 2048.0, 4096.0, 8192.0],
                units: ("MB", "GB"),
                factor: 1024.0,
            },
            Key::Levels("ports", &[8.0, 16.0, 24.0]),
            Key::Cat("bus", BUS),
            Key::Cat("backup", &["supercap", "BBU", "none"]),
            Key::Soft("power_w", 8.0, 25.0, 1),
        ],
    },
    Archetype {
        name: "HBA",
        families: true,
        keys: &[
            Key::Levels("ports", &[8.0, 16.0, 32.0]),
            Key::Cat("protocol", &["SAS3", "SAS4", "FC32", "FC64"]),
            Key::Cat("bus", BUS),
            Key::Cat("connector", &["SFF-8643", "SFF-8654", "LC"]),
            Key::Soft("power_w", 6.0, 20.0, 1),
        ],
    },
    Archetype {
        name: "TRANSCEIVER",
        families: true,
        keys: &[
            Key::Measure {
                key: "speed",
                unit_key: "speed_unit",
                values: &[10000.0, 25000.0, 40000.0, 100000.0, 400000.0],
                units: ("Mbps", "Gbps"),
                factor: 1000.0,
            },
            Key::Cat("form", &["SFP+", "SFP28", "QSFP28", "QSFP-DD"]),
            Key::Cat("reach", &["SR", "LR", "ER", "DAC"]),
            Key::Levels("wavelength_nm", &[850.0, 1310.0, 1550.0]),
            Key::Cat("connector", &["LC", "MPO"]),
            Key::Soft("power_w", 0.5, 12.0, 1),
        ],
    },
    Archetype {
        name: "BATTERY",
        families: true,
        keys: &[
            Key::Cat("chemistry", &["Li-ion", "LiMnO2", "NiMH"]),
            Key::Levels("capacity_mah", &[220.0, 1000.0, 2200.0, 3400.0]),
            Key::Levels("voltage_v", &[3.0, 3.6, 3.7, 7.4]),
            Key::Cat("form", &["CR2032", "pack", "pouch"]),
            Key::Soft("weight_g", 3.0, 120.0, 1),
        ],
    },
    Archetype {
        name: "CABLE",
        families: true,
        keys: &[
            Key::Cat("connector_a", &["SFF-8643", "SlimSAS", "MCIO", "RJ45", "C13"]),
            Key::Cat("connector_b", &["SFF-8643", "SlimSAS", "MCIO", "RJ45", "C14"]),
            Key::Measure {
                key: "length",
                unit_key: "length_unit",
                values: &[300.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0, 3000.0],
                units: ("mm", "m"),
                factor: 1000.0,
            },
            Key::Levels("awg", &[22.0, 24.0, 26.0, 28.0, 30.0]),
            Key::Cat("jacket", &["PVC", "LSZH", "plenum"]),
        ],
    },
    Archetype {
        name: "HEATSINK",
        families: true,
        keys: &[
            Key::Cat("material", &["aluminium", "copper", "vapor-chamber"]),
            Key::Levels("height_mm", &[25.0, 44.0, 64.0, 89.0]),
            Key::Cat("socket", &["LGA3647", "LGA4189", "LGA4677", "SP3", "SP5"]),
            Key::Soft("thermal_res", 0.1, 0.4, 3),
            Key::Cat("fin_style", &["straight", "pin", "folded"]),
        ],
    },
    Archetype {
        name: "TPM",
        families: true,
        keys: &[
            Key::Cat("version", &["1.2", "2.0"]),
            Key::Cat("interface", &["SPI", "LPC", "I2C"]),
            Key::Cat("certification", &["FIPS 140-2", "CC EAL4+", "none"]),
            Key::Levels("pins", &[10.0, 14.0, 20.0]),
        ],
    },
    Archetype {
        name: "BOOT_FLASH",
        families: true,
        keys: &[
            Key::Measure {
                key: "capacity",
                unit_key: "capacity_unit",
                values: &[16384.0, 32768.0, 65536.0, 131072.0],
                units: ("MB", "GB"),
                factor: 1024.0,
            },
            Key::Cat("interface", &["SPI", "eMMC", "USB", "M.2"]),
            Key::Cat("grade", &["commercial", "industrial"]),
            Key::Levels("retention_yr", &[5.0, 10.0, 20.0]),
        ],
    },
    Archetype {
        name: "RESISTOR",
        families: false,
        keys: &[
            Key::Measure {
                key: "resistance",
                unit_key: "resistance_unit",
                values: &[10.0, 47.0, 100.0, 220.0, 470.0, 1000.0, 2200.0, 4700.0, 10000.0, 47000.0, 100000.0],
                units: ("ohm", "kohm"),
                factor: 1000.0,
            },
            Key::Cat("tolerance", &["0.1%", "1%", "5%"]),
            Key::Cat("package", PACKAGE),
            Key::Levels("power_mw", &[50.0, 63.0, 100.0, 125.0, 250.0]),
            Key::Cat("composition", &["thick film", "thin film", "metal foil"]),
        ],
    },
    Archetype {
        name: "CAPACITOR",
        families: false,
        keys: &[
            Key::Measure {
                key: "capacitance",
                unit_key: "capacitance_unit",
                values: &[1.0, 10.0, 100.0, 1000.0, 4700.0, 10000.0, 22000.0],
                units: ("nF", "uF"),
                factor: 1000.0,
            },
            Key::Levels("voltage_v", &[6.3, 10.0, 16.0, 25.0, 50.0]),
            Key::Cat("dielectric", &["X5R", "X7R", "C0G", "Y5V"]),
            Key::Cat("package", PACKAGE),
            Key::Cat("construction", &["MLCC", "tantalum", "electrolytic"]),
        ],
    },
    Archetype {
        name: "INDUCTOR",
        families: false,
        keys: &[
            Key::Measure {
                key: "inductance",
                unit_key: "inductance_unit",
                values: &[100.0, 470.0, 1000.0, 2200.0, 4700.0, 10000.0],
                units: ("nH", "uH"),
                factor: 1000.0,
            },
            Key::Levels("current_a", &[0.5, 1.0, 2.0, 5.0, 10.0]),
            Key::Cat("package", PACKAGE),
            Key::Cat("shielding", &["shielded", "semi-shielded", "unshielded"]),
        ],
    },
    Archetype {
        name: "SCREW",
        families: false,
        keys: &[
            Key::Cat("thread", &["M2", "M2.5", "M3", "M3.5", "6-32"]),
            Key::Levels("length_mm", &[3.0, 4.0, 5.0, 6.0, 8.0, 10.0]),
            Key::Cat("head", &["pan", "flat", "captive"]),
            Key::Cat("drive", &["Phillips", "Torx", "hex"]),
            Key::Cat("finish", &["zinc", "black oxide", "stainless"]),
        ],
    },
    Archetype {
        name: "LABEL",
        families: false,
        keys: &[
            Key::Cat("material", &["polyester", "polyimide", "vinyl"]),
            Key::Levels("width_mm", &[10.0, 20.0, 25.0, 50.0]),
            Key::Cat("adhesive", &["acrylic", "rubber"]),
            Key::Cat("print", &["thermal transfer", "laser", "inkjet"]),
        ],
    },
    Archetype {
        name: "CONNECTOR",
        families: false,
        keys: &[
            Key::Cat("family", &["header", "card-edge", "board-to-board", "D-sub"]),
            Key::Levels("pins", &[2.0, 4.0, 8.0, 10.0, 20.0, 40.0, 80.0]),
            Key::Levels("pitch_mm", &[0.5, 0.8, 1.0, 1.27, 2.54]),
            Key::Cat("mount", &["SMT", "THT", "press-fit"]),
            Key::Cat("gender", &["male", "female"]),
        ],
    },
    Archetype {
        name: "DIODE",
        families: false,
        keys: &[
            Key::Cat("kind", &["Schottky", "Zener", "TVS", "rectifier"]),
            Key::Levels("vr_v", &[5.0, 12.0, 30.0, 60.0, 100.0]),
            Key::Levels("if_a", &[0.2, 0.5, 1.0, 3.0]),
            Key::Cat("package", &["SOD-123", "SOD-323", "SMA", "SMB"]),
        ],
    },
    Archetype {
        name: "OSCILLATOR",
        families: false,
        keys: &[
            Key::Measure {
                key: "frequency",
                unit_key: "frequency_unit",
                values: &[32.768, 12000.0, 24000.0, 25000.0, 100000.0, 125000.0],
                units: ("kHz", "MHz"),
                factor: 1000.0,
            },
            Key::Cat("stability", &["10ppm", "20ppm", "50ppm"]),
            Key::Cat("package", &["2016", "2520", "3225", "5032"]),
            Key::Cat("output", &["CMOS", "LVDS", "HCSL"]),
        ],
    },
    Archetype {
        name: "LED",
        families: false,
        keys: &[
            Key::Cat("color", &["red", "green", "amber", "blue", "white"]),
            Key::Cat("package", PACKAGE),
            Key::Levels("intensity_mcd", &[20.0, 50.0, 120.0, 300.0]),
            Key::Levels("vf_v", &[1.8, 2.1, 3.0, 3.3]),
        ],
    },
    Archetype {
        name: "GASKET",
        families: false,
        keys: &[
            Key::Cat("material", &["EPDM", "silicone", "conductive foam"]),
            Key::Levels("thickness_mm", &[0.5, 1.0, 1.5, 3.0]),
            Key::Cat("shape", &["strip", "frame", "die-cut"]),
        ],
    },
];

const ASSEMBLY_ARCHETYPES: &[&str] = &[
    "MOTHERBOARD",
    "STORAGE_CAGE",
    "FAN_TRAY",
    "PSU_CAGE",
    "PCIE_RISER",
    "BACKPLANE",
    "CPU_MODULE",
    "MEMORY_RISER",
    "IO_MODULE",
    "DRIVE_CARRIER",
    "BMC_CARD",
    "FRONT_PANEL",
    "POWER_DISTRIBUTION_BOARD",
    "CABLE_KIT",
    "CHASSIS",
    "MIDPLANE",
    "NETWORK_MEZZANINE",
    "RAIL_KIT",
    "BEZEL",
    "SLED",
];

const ASSEMBLY_KEYS: &[Key] = &[
    Key::Cat("revision", &["A", "B", "C", "D", "E"]),
    Key::Cat("rohs", &["compliant", "exempt"]),
    Key::Cat("plant", &["P1", "P2", "P3", "P4"]),
];

const MACHINE_ARCHETYPES: &[&str] = &[
    "RACK_SERVER_1U",
    "RACK_SERVER_2U",
    "TOWER_SERVER",
    "BLADE_SERVER",
    "STORAGE_SERVER",
    "GPU_SERVER",
    "EDGE_SERVER",
    "HCI_NODE",
];

const MACHINE_KEYS: &[Key] = &[
    Key::Cat("generation", &["G1", "G2", "G3", "G4", "G5", "G6"]),
    Key::Cat("region", &["NA", "EMEA", "APJ", "LATAM"]),
    Key::Levels("height_u", &[1.0, 2.0, 4.0, 7.0]),
    Key::Cat("sockets", &["1S", "2S", "4S"]),
];

const SUPPLIERS: &[&str] = &[
    "Avantek", "Borealis", "Cendra", "Dynavolt", "Elmsworth", "Fortis", "Galvan", "Helix",
    "Irongate", "Juno", "Kestrel", "Lumen",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeKind {
    Machine,
    Assembly,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSpec {
    pub name: String,
    pub kind: TypeKind,
    /// 0 for machines, `1..=tiers` for assemblies, `tiers + 1` for leaves.
    pub tier: usize,
    archetype: usize,
    /// `(key, value)` shared by every part of this type.
    defining: Option<(String, String)>,
}

/// Component types with their attribute schemas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogSpec {
    pub types: Vec<TypeSpec>,
    pub series_per_type: usize,
}

fn type_names(archetypes: &[&str], count: usize) -> Vec<String> {
    (0..count)
        .map(|i| {
            let base = archetypes[i % archetypes.len()];
            match i / archetypes.len() {
                0 => base.to_string(),
                v => format!("{base}_V{}", v + 1),
            }
        })
        .collect()
}

impl CatalogSpec {
    pub fn from_config(config: &SynthConfig, rng: &mut impl Rng) -> Self {
        let tiers = config.assembly_tiers();
        let mut types = Vec::new();
        for (i, name) in type_names(MACHINE_ARCHETYPES, config.machine_types).into_iter().enumerate() {
            types.push(TypeSpec {
                name,
                kind: TypeKind::Machine,
                tier: 0,
                archetype: i % MACHINE_ARCHETYPES.len(),
                defining: None,
            });
        }
        for (i, name) in type_names(ASSEMBLY_ARCHETYPES, config.assembly_types).into_iter().enumerate() {
            types.push(TypeSpec {
                name,
                kind: TypeKind::Assembly,
                tier: 1 + i % tiers,
                archetype: i % ASSEMBLY_ARCHETYPES.len(),
                defining: None,
            });
        }
        let leaf_names: Vec<&str> = LEAF_ARCHETYPES.iter().map(|a| a.name).collect();
        for (i, name) in type_names(&leaf_names, config.leaf_types).into_iter().enumerate() {
            let archetype = i % LEAF_ARCHETYPES.len();
            let defining = LEAF_ARCHETYPES[archetype].keys.iter().find_map(|k| match k {
                Key::Cat(key, values) => Some((key.to_string(), values.choose(rng).unwrap().to_string())),
                _ => None,
            });
            types.push(TypeSpec {
                name,
                kind: TypeKind::Leaf,
                tier: tiers + 1,
                archetype,
                defining,
            });
        }
        Self {
            types,
            series_per_type: config.series_per_type,
        }
    }

    fn keys(&self, t: usize) -> &'static [Key] {
        let spec = &self.types[t];
        match spec.kind {
            TypeKind::Machine => MACHINE_KEYS,
            TypeKind::Assembly => ASSEMBLY_KEYS,
            TypeKind::Leaf => LEAF_ARCHETYPES[spec.archetype].keys,
        }
    }

    fn has_families(&self, t: usize) -> bool {
        let spec = &self.types[t];
        spec.kind == TypeKind::Leaf && LEAF_ARCHETYPES[spec.archetype].families
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

/// Draws a fresh attribute record for type `t`.
fn base_record(spec: &CatalogSpec, t: usize, rng: &mut impl Rng) -> BTreeMap<String, AttrValue> {
    let mut meta = BTreeMap::new();
    let ty = &spec.types[t];
    for key in spec.keys(t) {
        match *key {
            Key::Cat(k, values) => {
                let v = match &ty.defining {
                    Some((dk, dv)) if dk == k => dv.clone(),
                    _ => values.choose(rng).unwrap().to_string(),
                };
                meta.insert(k.to_string(), AttrValue::Text(v));
            }
            Key::Levels(k, values) => {
                meta.insert(k.to_string(), AttrValue::Number(*values.choose(rng).unwrap()));
            }
            Key::Measure {
                key,
                unit_key,
                values,
                units,
                ..
            } => {
                meta.insert(key.to_string(), AttrValue::Number(*values.choose(rng).unwrap()));
                meta.insert(unit_key.to_string(), AttrValue::Text(units.0.to_string()));
            }
            Key::Soft(k, lo, hi, d) => {
                meta.insert(k.to_string(), AttrValue::Number(round_to(rng.random_range(lo..hi), d)));
            }
        }
    }
    let series = rng.random_range(0..spec.series_per_type);
    meta.insert("series".into(), AttrValue::Text(format!("S{t:03}-{series}")));
    meta
}

/// A family member: supplier swapped, soft values jittered, and with
/// probability `unit_rate` the measure spelled in its alternative unit.
fn member_record(
    spec: &CatalogSpec,
    t: usize,
    base: &BTreeMap<String, AttrValue>,
    unit_rate: f64,
    rng: &mut impl Rng,
) -> BTreeMap<String, AttrValue> {
    let mut meta = base.clone();
    for key in spec.keys(t) {
        match *key {
            Key::Soft(k, _, _, d) => {
                if let Some(AttrValue::Number(x)) = base.get(k) {
                    let j = 1.0 + rng.random_range(-0.02..0.02);
                    meta.insert(k.to_string(), AttrValue::Number(round_to(x * j, d)));
                }
            }
            Key::Measure {
                key,
                unit_key,
                units,
                factor,
                ..
            } => {
                if unit_rate > 0.0 && rng.random_bool(unit_rate) {
                    if let Some(AttrValue::Number(x)) = base.get(key) {
                        meta.insert(key.to_string(), AttrValue::Number(round_to(x / factor, 6)));
                        meta.insert(unit_key.to_string(), AttrValue::Text(units.1.to_string()));
                    }
                }
            }
            _ => {}
        }
    }
    meta
}

/// Leaf parts plus their grouping into substitute families and singletons.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub spec: CatalogSpec,
    pub parts: Vec<ComponentNode>,
    /// Type index of each part.
    pub part_types: Vec<usize>,
    /// Member indices into `parts`, one entry per substitute family.
    pub families: Vec<Vec<usize>>,
    /// Per leaf type: groups of interchangeable parts (families and singletons).
    groups: BTreeMap<usize, Vec<Vec<usize>>>,
}

fn pairs_of(size: usize) -> usize {
    size * (size - 1) / 2
}

/// Family sizes whose pair counts add up to exactly `target`.
fn family_sizes(target: usize, max_size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let weights = [0.0, 0.0, 0.5, 0.3, 0.15, 0.05];
    let mut sizes = Vec::new();
    let mut left = target;
    while left > 0 {
        let mut s = loop {
            let x: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = 2;
            for (k, w) in weights.iter().enumerate().take(max_size + 1).skip(2) {
                acc += w;
                pick = k;
                if x < acc {
                    break;
                }
            }
            if pick <= max_size {
                break pick;
            }
        };
        while pairs_of(s) > left {
            s -= 1;
        }
        left -= pairs_of(s);
        sizes.push(s);
    }
    sizes
}

pub fn generate_catalog(config: &SynthConfig) -> Result<Catalog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let spec = CatalogSpec::from_config(config, &mut rng);
    let leaf_types: Vec<usize> = (0..spec.types.len())
        .filter(|&t| spec.types[t].kind == TypeKind::Leaf)
        .collect();
    let family_types: Vec<usize> = leaf_types.iter().copied().filter(|&t| spec.has_families(t)).collect();
    let sizes = family_sizes(config.substitute_pairs, config.max_family_size, &mut rng);
    if !sizes.is_empty() && family_types.is_empty() {
        return Err(config_err("substitute pairs requested but no leaf type carries families"));
    }
    let mut per_type: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in sizes.iter().enumerate() {
        let t = family_types[i % family_types.len()];
        per_type.entry(t).or_default().push(s);
    }
    let share = config.leaf_parts / leaf_types.len().max(1);

    let mut parts = Vec::new();
    let mut part_types = Vec::new();
    let mut families = Vec::new();
    let mut groups: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
    let mut serial = 0usize;
    let prefix = |t: usize| -> String {
        spec.types[t].name.chars().filter(|c| c.is_ascii_alphanumeric()).take(3).collect()
    };
    for &t in &leaf_types {
        let fams = per_type.get(&t).cloned().unwrap_or_default();
        let members: usize = fams.iter().sum();
        let singletons = share.saturating_sub(members).max(2);
        let type_groups = groups.entry(t).or_default();
        for size in fams {
            serial += 1;
            let base = base_record(&spec, t, &mut rng);
            let mut suppliers: Vec<&str> = SUPPLIERS.to_vec();
            suppliers.shuffle(&mut rng);
            let mut family = Vec::with_capacity(size);
            for (m, supplier) in suppliers.iter().take(size).enumerate() {
                let mut meta = if m == 0 {
                    base.clone()
                } else {
                    member_record(&spec, t, &base, config.unit_variant_rate, &mut rng)
                };
                meta.insert("mfr".into(), AttrValue::Text(supplier.to_string()));
                let id = format!("{}{serial:05}-{}{}", prefix(t), supplier[..2].to_uppercase(), m + 1);
                family.push(parts.len());
                parts.push(ComponentNode {
                    id: PartIdentifier::new(&id)?,
                    component_type: spec.types[t].name.clone(),
                    metadata: meta,
                });
                part_types.push(t);
            }
            type_groups.push(family.clone());
            families.push(family);
        }
        for _ in 0..singletons {
            serial += 1;
            let mut meta = base_record(&spec, t, &mut rng);
            let supplier = SUPPLIERS.choose(&mut rng).unwrap();
            meta.insert("mfr".into(), AttrValue::Text(supplier.to_string()));
            let id = format!("{}{serial:05}-{}1", prefix(t), supplier[..2].to_uppercase());
            type_groups.push(vec![parts.len()]);
            parts.push(ComponentNode {
                id: PartIdentifier::new(&id)?,
                component_type: spec.types[t].name.clone(),
                metadata: meta,
            });
            part_types.push(t);
        }
    }
    Ok(Catalog {
        spec,
        parts,
        part_types,
        families,
        groups,
    })
}

/// All within-family unordered pairs, each once, ordered `(smaller, larger)`
/// by identifier and sorted.
pub fn emit_ground_truth(families: &[Vec<PartIdentifier>]) -> Vec<(PartIdentifier, PartIdentifier)> {
    let mut pairs = Vec::new();
    for f in families {
        let mut members = f.clone();
        members.sort();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                pairs.push((members[i].clone(), members[j].clone()));
            }
        }
    }
    pairs.sort();
    pairs
}

#[derive(Debug, Clone)]
struct Slot {
    leaf_type: usize,
    groups: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
struct Template {
    assemblies: Vec<usize>,
    leaves: Vec<Slot>,
}

/// Everything the generator produces.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    /// Leaf parts first, then assemblies and machines in creation order.
    pub nodes: Vec<ComponentNode>,
    pub boms: Vec<BomTree>,
    pub families: Vec<Vec<PartIdentifier>>,
    /// Deduplicated `(parent, child, quantity)` rows over all BOMs.
    pub edges: Vec<BomEdge>,
}

impl SynthCorpus {
    pub fn pairs(&self) -> Vec<(PartIdentifier, PartIdentifier)> {
        emit_ground_truth(&self.families)
    }

    /// Nodes, connections and substitute pairs merged into one graph.
    pub fn build_graph(&self) -> Result<MachineKnowledgeGraph> {
        let mut g = MachineKnowledgeGraph::new();
        for n in &self.nodes {
            g.upsert_node(n);
        }
        let edges: Vec<_> = self.edges.iter().map(|e| (e.parent.clone(), e.child.clone())).collect();
        g.ingest_connections(&edges)?;
        g.ingest_substitutes(&self.pairs(), false)?;
        Ok(g)
    }

    /// Writes `nodes.jsonl`, `edges.csv`, `pairs.csv` and `provenance.json`
    /// into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_nodes_file(&dir.join(NODES_FILE), &self.nodes)?;
        io::write_edges_file(&dir.join(EDGES_FILE), &self.edges)?;
        io::write_pairs_file(&dir.join(PAIRS_FILE), &self.pairs())?;
        let provenance = serde_json::json!({
            "generator": "mkg synth",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.config.seed,
            "config": self.config,
            "nodes": self.nodes.len(),
            "edges": self.edges.len(),
            "pairs": self.pairs().len(),
            "families": self.families.len(),
            "boms": self.boms.len(),
        });
        io::write_json(&dir.join(PROVENANCE_FILE), &provenance)
    }
}

pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.csv";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const PROVENANCE_FILE: &str = "provenance.json";

struct Builder<'a> {
    config: &'a SynthConfig,
    catalog: &'a Catalog,
    templates: Vec<Template>,
    nodes: Vec<ComponentNode>,
    /// Children with quantities, per node index (leaf parts have none).
    children: Vec<Vec<(usize, u32)>>,
    node_type: Vec<usize>,
    pool: BTreeMap<usize, Vec<usize>>,
    used: Vec<bool>,
    rng: ChaCha8Rng,
    assemblies: usize,
    machines: usize,
}

impl Builder<'_> {
    fn instantiate(&mut self, t: usize) -> Result<usize> {
        let mut kids: Vec<(usize, u32)> = Vec::new();
        let template = self.templates[t].clone();
        for &a in &template.assemblies {
            let reuse = self.pool.get(&a).filter(|p| !p.is_empty()).is_some()
                && self.rng.random_bool(self.config.sharing_rate);
            let child = if reuse {
                *self.pool[&a].choose(&mut self.rng).unwrap()
            } else {
                self.instantiate(a)?
            };
            kids.push((child, 1));
        }
        for slot in &template.leaves {
            let g = *slot.groups.choose(&mut self.rng).unwrap();
            let members = &self.catalog.groups[&slot.leaf_type][g];
            let part = *members.choose(&mut self.rng).unwrap();
            self.used[part] = true;
            let q = self.rng.random_range(1..=4);
            kids.push((part, q));
            if members.len() > 1 && self.rng.random_bool(self.config.alternate_rate) {
                let alt = *members.iter().filter(|&&m| m != part).collect::<Vec<_>>().choose(&mut self.rng).unwrap();
                self.used[*alt] = true;
                kids.push((*alt, q));
            }
        }
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (c, q) in kids {
            *merged.entry(c).or_default() += q;
        }
        let spec = &self.catalog.spec;
        let (id, meta) = match spec.types[t].kind {
            TypeKind::Machine => {
                self.machines += 1;
                (format!("SYS{:05}", self.machines), base_record(spec, t, &mut self.rng))
            }
            _ => {
                self.assemblies += 1;
                (format!("ASM{:06}", self.assemblies), base_record(spec, t, &mut self.rng))
            }
        };
        let idx = self.nodes.len();
        self.nodes.push(ComponentNode {
            id: PartIdentifier::new(&id)?,
            component_type: spec.types[t].name.clone(),
            metadata: meta,
        });
        self.children.push(merged.into_iter().collect());
        self.node_type.push(t);
        self.pool.entry(t).or_default().push(idx);
        Ok(idx)
    }

    fn tree(&self, root: usize) -> BomTree {
        let mut parts = BTreeMap::new();
        let mut edges = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(v) = stack.pop() {
            parts.insert(self.nodes[v].id.clone(), self.nodes[v].clone());
            for &(c, q) in &self.children[v] {
                edges.push(BomEdge {
                    parent: self.nodes[v].id.clone(),
                    child: self.nodes[c].id.clone(),
                    quantity: q,
                });
                if !seen[c] {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        BomTree {
            root: self.nodes[root].id.clone(),
            edges,
            parts,
        }
    }
}

fn build_templates(catalog: &Catalog, config: &SynthConfig, rng: &mut impl Rng) -> Vec<Template> {
    let spec = &catalog.spec;
    let types = &spec.types;
    let tiers = config.assembly_tiers();
    let of_tier = |k: usize| -> Vec<usize> { (0..types.len()).filter(|&t| types[t].kind != TypeKind::Leaf && types[t].tier == k).collect() };
    let leaf_types: Vec<usize> = catalog.groups.keys().copied().collect();
    let mut templates = vec![Template::default(); types.len()];
    let make_slot = |lt: usize, rng: &mut dyn rand::RngCore| -> Slot {
        let n = catalog.groups[&lt].len();
        let want = rng.random_range(config.slot_groups_min..=config.slot_groups_max).min(n);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(rng);
        all.truncate(want);
        all.sort_unstable();
        Slot { leaf_type: lt, groups: all }
    };
    for t in 0..types.len() {
        match types[t].kind {
            TypeKind::Leaf => {}
            TypeKind::Machine => {
                let below = of_tier(1);
                let k = rng.random_range(config.machine_slots_min..=config.machine_slots_max);
                for _ in 0..k {
                    templates[t].assemblies.push(*below.choose(rng).unwrap());
                }
                let lt = *leaf_types.choose(rng).unwrap();
                templates[t].leaves.push(make_slot(lt, rng));
            }
            TypeKind::Assembly => {
                let tier = types[t].tier;
                let deeper: Vec<usize> = (tier + 1..=tiers).flat_map(&of_tier).collect();
                if !deeper.is_empty() {
                    let k = rng.random_range(0..=config.child_assemblies_max);
                    for _ in 0..k {
                        templates[t].assemblies.push(*deeper.choose(rng).unwrap());
                    }
                }
                let k = rng.random_range(config.leaf_slots_min..=config.leaf_slots_max);
                let mut lts = leaf_types.clone();
                lts.shuffle(rng);
                for &lt in lts.iter().take(k) {
                    templates[t].leaves.push(make_slot(lt, rng));
                }
            }
        }
    }
    // Every assembly type must be reachable from some machine type.
    for tier in 1..=tiers {
        let parents = of_tier(tier - 1);
        for t in of_tier(tier) {
            if !parents.iter().any(|&p| templates[p].assemblies.contains(&t)) {
                let p = *parents.choose(rng).unwrap();
                templates[p].assemblies.push(t);
            }
        }
    }
    // Every leaf type must have a slot in some assembly.
    let asm: Vec<usize> = (0..types.len()).filter(|&t| types[t].kind == TypeKind::Assembly).collect();
    for &lt in &leaf_types {
        if !asm.iter().any(|&a| templates[a].leaves.iter().any(|s| s.leaf_type == lt)) {
            let a = *asm.choose(rng).unwrap();
            templates[a].leaves.push(make_slot(lt, rng));
        }
    }
    templates
}

/// Machine BOMs over `catalog`. Returns the corpus with every generated
/// node, the per-machine trees and the deduplicated edge list.
pub fn generate_boms(catalog: &Catalog, config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_B0B5);
    let templates = build_templates(catalog, config, &mut rng);
    let n_leaf = catalog.parts.len();
    let mut b = Builder {
        config,
        catalog,
        templates,
        nodes: catalog.parts.clone(),
        children: vec![Vec::new(); n_leaf],
        node_type: catalog.part_types.clone(),
        pool: BTreeMap::new(),
        used: vec![false; n_leaf],
        rng,
        assemblies: 0,
        machines: 0,
    };
    let machine_types: Vec<usize> = (0..catalog.spec.types.len())
        .filter(|&t| catalog.spec.types[t].kind == TypeKind::Machine)
        .collect();
    let mut roots = Vec::with_capacity(config.machines);
    for m in 0..config.machines {
        roots.push(b.instantiate(machine_types[m % machine_types.len()])?);
    }
    if config.use_all_parts {
        let unused: Vec<usize> = (0..n_leaf).filter(|&p| !b.used[p]).collect();
        for p in unused {
            let lt = catalog.part_types[p];
            let hosts: Vec<usize> = (n_leaf..b.nodes.len())
                .filter(|&i| b.templates[b.node_type[i]].leaves.iter().any(|s| s.leaf_type == lt))
                .collect();
            let Some(&h) = hosts.choose(&mut b.rng) else {
                continue;
            };
            let q = b.rng.random_range(1..=4);
            b.children[h].push((p, q));
            b.used[p] = true;
        }
    }
    let boms: Vec<BomTree> = roots.iter().map(|&r| b.tree(r)).collect();
    let mut edges = Vec::new();
    for (v, kids) in b.children.iter().enumerate() {
        for &(c, q) in kids {
            edges.push(BomEdge {
                parent: b.nodes[v].id.clone(),
                child: b.nodes[c].id.clone(),
                quantity: q,
            });
        }
    }
    let families = catalog
        .families
        .iter()
        .map(|f| f.iter().map(|&i| catalog.parts[i].id.clone()).collect())
        .collect();
    Ok(SynthCorpus {
        config: config.clone(),
        nodes: b.nodes,
        boms,
        families,
        edges,
    })
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let catalog = generate_catalog(config)?;
    generate_boms(&catalog, config)
}
