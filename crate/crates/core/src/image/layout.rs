//! Static partition layouts used when an image carries no descriptor region.

use super::PartitionRole;

pub struct StaticRegion {
    pub name: Option<&'static str>,
    pub role: PartitionRole,
    pub offset: u64,
    /// `None` extends the region to the end of the image.
    pub size: Option<u64>,
}

pub struct StaticLayout {
    pub name: &'static str,
    pub min_image_size: u64,
    pub max_image_size: u64,
    pub regions: &'static [StaticRegion],
}

impl StaticLayout {
    pub fn matches(&self, image_size: u64) -> bool {
        (self.min_image_size..=self.max_image_size).contains(&image_size)
    }
}

const fn region(name: Option<&'static str>, role: PartitionRole, offset: u64, size: Option<u64>) -> StaticRegion {
    StaticRegion { name, role, offset, size }
}

/// User area of an 8 GB eMMC part.
pub const EMMC_8GB_SIZE: u64 = 0x1_D1F0_0000;

/// Second-generation board computer, 8 GB eMMC. Sizes are decimal units.
pub const NYON_8GB: StaticLayout = StaticLayout {
    name: "nyon-8gb",
    min_image_size: 7_000_000_000,
    max_image_size: 8 * 1024 * 1024 * 1024,
    regions: &[
        region(None, PartitionRole::Descriptor, 0x40_0000, Some(16_000_000)),
        region(Some("bui3xx-image"), PartitionRole::System, 0x280_0000, Some(1_000_000_000)),
        region(Some("bui3xx-systemconfig"), PartitionRole::Systemconfig, 0x4290_0000, Some(192_000_000)),
        region(Some("bui3xx-recovery"), PartitionRole::Recovery, 0x4ea0_0000, Some(336_000_000)),
        region(None, PartitionRole::Maps, 0x6ac0_0000, Some(5_000_000_000)),
        region(None, PartitionRole::Keymaterial, 0x1_ac90_0000, Some(50_000_000)),
        // not sector-pair aligned on the real device
        region(None, PartitionRole::UserdataEncrypted, 0x1_af90_0200, None),
    ],
};

pub const FIXTURE_64MIB_SIZE: u64 = 64 * 1024 * 1024;

/// Desk-scale layout with the same ordering and roles as [`NYON_8GB`].
pub const FIXTURE_64MIB: StaticLayout = StaticLayout {
    name: "fixture-64mib",
    min_image_size: FIXTURE_64MIB_SIZE,
    max_image_size: FIXTURE_64MIB_SIZE,
    regions: &[
        region(None, PartitionRole::Descriptor, 0x4_0000, Some(0x4_0000)),
        region(Some("bui3xx-image"), PartitionRole::System, 0x10_0000, Some(0x80_0000)),
        region(Some("bui3xx-systemconfig"), PartitionRole::Systemconfig, 0x98_0000, Some(0x20_0000)),
        region(Some("bui3xx-recovery"), PartitionRole::Recovery, 0xc0_0000, Some(0x30_0000)),
        region(None, PartitionRole::Maps, 0x100_0000, Some(0x240_0000)),
        region(None, PartitionRole::Keymaterial, 0x348_0000, Some(0x20_0000)),
        region(None, PartitionRole::UserdataEncrypted, 0x370_0200, None),
    ],
};

pub const STATIC_LAYOUTS: &[&StaticLayout] = &[&NYON_8GB, &FIXTURE_64MIB];

pub fn layout_for_size(image_size: u64) -> Option<&'static StaticLayout> {
    STATIC_LAYOUTS.iter().copied().find(|l| l.matches(image_size))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_disjoint(layout: &StaticLayout, image_size: u64) {
        let mut end = 0;
        for r in layout.regions {
            assert!(r.offset >= end, "{} overlaps at {:#x}", layout.name, r.offset);
            end = r.offset + r.size.unwrap_or(image_size - r.offset);
        }
        assert!(end <= image_size);
    }

    #[test]
    fn layouts_are_disjoint_and_ordered() {
        assert_disjoint(&NYON_8GB, EMMC_8GB_SIZE);
        assert_disjoint(&FIXTURE_64MIB, FIXTURE_64MIB_SIZE);
    }

    #[test]
    fn roles_follow_same_order() {
        let a: Vec<_> = NYON_8GB.regions.iter().map(|r| r.role).collect();
        let b: Vec<_> = FIXTURE_64MIB.regions.iter().map(|r| r.role).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn lookup_by_size() {
        assert_eq!(layout_for_size(EMMC_8GB_SIZE).unwrap().name, "nyon-8gb");
        assert_eq!(layout_for_size(FIXTURE_64MIB_SIZE).unwrap().name, "fixture-64mib");
        assert!(layout_for_size(1234).is_none());
    }
}
