//! Virtual resource profiles and the fixture-backed "real" provider.
//!
//! A [`ProfileRegistry`] holds one deterministic fake provider per resource
//! class. Responses are drawn from a counter-based stream keyed by
//! `(registry seed, resource class, op index)`, so a session transcript is a
//! pure function of the seed and the operations issued. The real provider
//! answers the same operations from a static [`RealFixture`].
//!
//! Fake data is built to be recognisably fake: contact numbers use the
//! reserved `555-01xx` range, surnames come from a pool no fixture uses, and
//! location fixes are rejected if they land within one degree of an
//! excluded (real) position.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::permission::{ResourceClass, SessionId, Tick};

/// Audio sample rate for every microphone payload, real or fake (mono).
pub const SAMPLE_RATE_HZ: u32 = 8000;

/// Fake location fixes never fall within this many degrees of an excluded fix.
pub const LOCATION_EXCLUSION_DEG: f64 = 1.0;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("operation for {op} sent to a {session} session")]
    ClassMismatch {
        session: ResourceClass,
        op: ResourceClass,
    },
}

/// An operation an app performs against a resource.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResourceOp {
    CameraCapture { width: u32, height: u32 },
    MicrophoneRead { duration_ms: u32 },
    ContactsQuery { prefix: String },
    MessagesQuery { since_tick: Tick },
    CallLogQuery { since_tick: Tick },
    LocationRead,
    WifiScan,
    StorageRead { path: String },
}

impl ResourceOp {
    pub fn resource(&self) -> ResourceClass {
        match self {
            ResourceOp::CameraCapture { .. } => ResourceClass::Camera,
            ResourceOp::MicrophoneRead { .. } => ResourceClass::Microphone,
            ResourceOp::ContactsQuery { .. } => ResourceClass::Contacts,
            ResourceOp::MessagesQuery { .. } => ResourceClass::Messages,
            ResourceOp::CallLogQuery { .. } => ResourceClass::CallLog,
            ResourceOp::LocationRead => ResourceClass::Location,
            ResourceOp::WifiScan => ResourceClass::WifiState,
            ResourceOp::StorageRead { .. } => ResourceClass::Storage,
        }
    }

    /// A representative operation for each class, used for inspection dumps.
    pub fn sample(resource: ResourceClass) -> ResourceOp {
        match resource {
            ResourceClass::Camera => ResourceOp::CameraCapture {
                width: 4,
                height: 4,
            },
            ResourceClass::Microphone => ResourceOp::MicrophoneRead { duration_ms: 2 },
            ResourceClass::Contacts => ResourceOp::ContactsQuery {
                prefix: String::new(),
            },
            ResourceClass::Messages => ResourceOp::MessagesQuery { since_tick: 0 },
            ResourceClass::CallLog => ResourceOp::CallLogQuery { since_tick: 0 },
            ResourceClass::Location => ResourceOp::LocationRead,
            ResourceClass::WifiState => ResourceOp::WifiScan,
            ResourceClass::Storage => ResourceOp::StorageRead {
                path: "/sdcard/notes.txt".into(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContactRecord {
    pub name: String,
    pub number: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageRecord {
    pub from: String,
    pub body: String,
    pub at: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CallRecord {
    pub number: String,
    pub at: Tick,
    pub duration_s: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub lat: f64,
    pub lon: f64,
}

impl GeoFix {
    pub fn new(lat: f64, lon: f64) -> Self {
        GeoFix { lat, lon }
    }

    /// Euclidean distance in degree space.
    pub fn degrees_to(&self, other: &GeoFix) -> f64 {
        ((self.lat - other.lat).powi(2) + (self.lon - other.lon).powi(2)).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WifiNetwork {
    pub ssid: String,
    pub bssid: String,
    pub rssi_dbm: i32,
}

/// Payload returned for a [`ResourceOp`]; the variant always mirrors the op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResourceResponse {
    /// 8-bit grayscale, row-major.
    Frame {
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    },
    Audio {
        sample_rate: u32,
        samples: Vec<i16>,
    },
    Contacts { records: Vec<ContactRecord> },
    Messages { records: Vec<MessageRecord> },
    CallLog { records: Vec<CallRecord> },
    Location { fix: GeoFix },
    Wifi { networks: Vec<WifiNetwork> },
    Blob { path: String, bytes: Vec<u8> },
}

impl ResourceResponse {
    pub fn resource(&self) -> ResourceClass {
        match self {
            ResourceResponse::Frame { .. } => ResourceClass::Camera,
            ResourceResponse::Audio { .. } => ResourceClass::Microphone,
            ResourceResponse::Contacts { .. } => ResourceClass::Contacts,
            ResourceResponse::Messages { .. } => ResourceClass::Messages,
            ResourceResponse::CallLog { .. } => ResourceClass::CallLog,
            ResourceResponse::Location { .. } => ResourceClass::Location,
            ResourceResponse::Wifi { .. } => ResourceClass::WifiState,
            ResourceResponse::Blob { .. } => ResourceClass::Storage,
        }
    }

    /// Tag parity plus the structural constraints the op implies.
    pub fn conforms_to(&self, op: &ResourceOp) -> bool {
        match (op, self) {
            (
                ResourceOp::CameraCapture { width, height },
                ResourceResponse::Frame {
                    width: w,
                    height: h,
                    pixels,
                },
            ) => w == width && h == height && pixels.len() as u64 == *width as u64 * *height as u64,
            (
                ResourceOp::MicrophoneRead { duration_ms },
                ResourceResponse::Audio {
                    sample_rate,
                    samples,
                },
            ) => *sample_rate == SAMPLE_RATE_HZ && samples.len() as u64 == expected_samples(*duration_ms),
            (ResourceOp::ContactsQuery { prefix }, ResourceResponse::Contacts { records }) => {
                records.iter().all(|c| c.name.starts_with(prefix.as_str()))
            }
            (ResourceOp::MessagesQuery { since_tick }, ResourceResponse::Messages { records }) => {
                records.iter().all(|m| m.at >= *since_tick)
            }
            (ResourceOp::CallLogQuery { since_tick }, ResourceResponse::CallLog { records }) => {
                records.iter().all(|c| c.at >= *since_tick)
            }
            (ResourceOp::LocationRead, ResourceResponse::Location { fix }) => fix.is_valid(),
            (ResourceOp::WifiScan, ResourceResponse::Wifi { .. }) => true,
            (ResourceOp::StorageRead { path }, ResourceResponse::Blob { path: p, .. }) => p == path,
            _ => false,
        }
    }
}

fn expected_samples(duration_ms: u32) -> u64 {
    duration_ms as u64 * SAMPLE_RATE_HZ as u64 / 1000
}

/// A live handle into one virtual profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualSession {
    pub session_id: SessionId,
    pub resource: ResourceClass,
    pub op_counter: u64,
}

/// Fake provider for one resource class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualProfile {
    pub resource: ResourceClass,
    stream_key: u64,
}

impl VirtualProfile {
    fn rng_for(&self, op_index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.stream_key ^ splitmix64(op_index)))
    }
}

/// The set of virtual profiles built during setup.
#[derive(Debug)]
pub struct ProfileRegistry {
    seed: u64,
    profiles: BTreeMap<ResourceClass, VirtualProfile>,
    exclusions: Vec<GeoFix>,
    next_session: AtomicU64,
}

/// Builds one virtual profile for every resource class.
///
/// Fake fixes avoid the default fixture position; use
/// [`ProfileRegistry::with_exclusions`] when serving a different fixture.
pub fn build_profiles(seed: u64) -> ProfileRegistry {
    let profiles = ResourceClass::ALL
        .into_iter()
        .map(|resource| {
            let stream_key = splitmix64(seed ^ splitmix64(0x5151_0000 + resource.index()));
            (resource, VirtualProfile { resource, stream_key })
        })
        .collect();
    ProfileRegistry {
        seed,
        profiles,
        exclusions: vec![RealFixture::default_fixture().location],
        next_session: AtomicU64::new(1),
    }
}

impl ProfileRegistry {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_exclusions(mut self, exclusions: Vec<GeoFix>) -> Self {
        self.exclusions = exclusions;
        self
    }

    pub fn exclusions(&self) -> &[GeoFix] {
        &self.exclusions
    }

    pub fn profile(&self, resource: ResourceClass) -> &VirtualProfile {
        self.profiles
            .get(&resource)
            .expect("registry covers every resource class")
    }

    pub fn profiles(&self) -> impl Iterator<Item = &VirtualProfile> {
        self.profiles.values()
    }

    /// Session ids are shared between real and virtual sessions so they stay
    /// unique across a run.
    pub fn allocate_session_id(&self) -> SessionId {
        SessionId(self.next_session.fetch_add(1, Ordering::Relaxed))
    }

    pub fn open_session(&self, resource: ResourceClass) -> VirtualSession {
        VirtualSession {
            session_id: self.allocate_session_id(),
            resource,
            op_counter: 0,
        }
    }

    /// Runs `op` against the fake provider behind `session`.
    pub fn invoke(
        &self,
        session: &mut VirtualSession,
        op: &ResourceOp,
    ) -> Result<ResourceResponse, ProfileError> {
        if op.resource() != session.resource {
            return Err(ProfileError::ClassMismatch {
                session: session.resource,
                op: op.resource(),
            });
        }
        let mut rng = self.profile(session.resource).rng_for(session.op_counter);
        session.op_counter += 1;
        Ok(self.fake_response(&mut rng, op))
    }

    fn fake_response(&self, rng: &mut ChaCha8Rng, op: &ResourceOp) -> ResourceResponse {
        match op {
            ResourceOp::CameraCapture { width, height } => {
                let mut pixels = vec![0u8; *width as usize * *height as usize];
                rng.fill(&mut pixels[..]);
                ResourceResponse::Frame {
                    width: *width,
                    height: *height,
                    pixels,
                }
            }
            ResourceOp::MicrophoneRead { duration_ms } => {
                let n = expected_samples(*duration_ms) as usize;
                let samples = (0..n).map(|_| rng.random_range(-2048i16..=2048)).collect();
                ResourceResponse::Audio {
                    sample_rate: SAMPLE_RATE_HZ,
                    samples,
                }
            }
            ResourceOp::ContactsQuery { prefix } => {
                let mut records: Vec<ContactRecord> = (0..FAKE_BOOK_SIZE)
                    .map(|_| fake_contact(rng))
                    .filter(|c| c.name.starts_with(prefix.as_str()))
                    .collect();
                records.sort();
                ResourceResponse::Contacts { records }
            }
            ResourceOp::MessagesQuery { since_tick } => {
                let mut records: Vec<MessageRecord> = (0..FAKE_LOG_SIZE)
                    .map(|_| MessageRecord {
                        from: fake_contact(rng).number,
                        body: FAKE_PHRASES[rng.random_range(0..FAKE_PHRASES.len())].to_owned(),
                        at: rng.random_range(0..LOG_HORIZON_S),
                    })
                    .filter(|m| m.at >= *since_tick)
                    .collect();
                records.sort_by_key(|m| m.at);
                ResourceResponse::Messages { records }
            }
            ResourceOp::CallLogQuery { since_tick } => {
                let mut records: Vec<CallRecord> = (0..FAKE_LOG_SIZE)
                    .map(|_| CallRecord {
                        number: fake_contact(rng).number,
                        at: rng.random_range(0..LOG_HORIZON_S),
                        duration_s: rng.random_range(5..900),
                    })
                    .filter(|c| c.at >= *since_tick)
                    .collect();
                records.sort_by_key(|c| c.at);
                ResourceResponse::CallLog { records }
            }
            ResourceOp::LocationRead => ResourceResponse::Location {
                fix: self.fake_fix(rng),
            },
            ResourceOp::WifiScan => {
                let count = rng.random_range(2..=5);
                let networks = (0..count)
                    .map(|_| {
                        let id: u16 = rng.random();
                        let mac: [u8; 5] = rng.random();
                        WifiNetwork {
                            ssid: format!("VirtualNet-{id:04X}"),
                            // Locally administered unicast prefix.
                            bssid: format!(
                                "02:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
                                mac[0], mac[1], mac[2], mac[3], mac[4]
                            ),
                            rssi_dbm: rng.random_range(-90..=-30),
                        }
                    })
                    .collect();
                ResourceResponse::Wifi { networks }
            }
            ResourceOp::StorageRead { path } => {
                let mut bytes = vec![0u8; rng.random_range(64..=256)];
                rng.fill(&mut bytes[..]);
                ResourceResponse::Blob {
                    path: path.clone(),
                    bytes,
                }
            }
        }
    }

    fn fake_fix(&self, rng: &mut ChaCha8Rng) -> GeoFix {
        loop {
            let fix = GeoFix::new(rng.random_range(-90.0..=90.0), rng.random_range(-180.0..=180.0));
            if self
                .exclusions
                .iter()
                .all(|x| fix.degrees_to(x) >= LOCATION_EXCLUSION_DEG)
            {
                return fix;
            }
        }
    }
}

const FAKE_BOOK_SIZE: usize = 12;
const FAKE_LOG_SIZE: usize = 8;
const LOG_HORIZON_S: Tick = 7 * 86_400;

// One given name per initial so any single-letter prefix can match.
const FAKE_GIVEN: [&str; 26] = [
    "Aria", "Bram", "Cyra", "Dov", "Elin", "Fenn", "Gala", "Hale", "Isko", "Juno", "Kael", "Lior",
    "Mira", "Nilo", "Orla", "Pax", "Quin", "Rhea", "Soren", "Tova", "Ulla", "Vero", "Wren", "Xavi",
    "Yara", "Zeno",
];
// Fixture surnames must never appear here.
const FAKE_FAMILY: [&str; 8] = [
    "Ashgrove",
    "Brightwater",
    "Coldbrook",
    "Dunmere",
    "Elmsworth",
    "Fernhollow",
    "Greystone",
    "Hollowell",
];
const FAKE_PHRASES: [&str; 6] = [
    "see you soon",
    "running late",
    "call me back",
    "thanks!",
    "on my way",
    "sounds good",
];

fn fake_contact(rng: &mut ChaCha8Rng) -> ContactRecord {
    let given = FAKE_GIVEN[rng.random_range(0..FAKE_GIVEN.len())];
    let family = FAKE_FAMILY[rng.random_range(0..FAKE_FAMILY.len())];
    ContactRecord {
        name: format!("{given} {family}"),
        number: format!("+1-555-01{:02}", rng.random_range(0..100)),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A session backed by the real (fixture) provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RealSession {
    pub session_id: SessionId,
    pub app_id: String,
    pub resource: ResourceClass,
}

/// Anything that can serve operations for a [`RealSession`].
///
/// [`RealFixture`] is the stock implementation; tests wrap it to count or
/// forbid real accesses.
pub trait RealProvider {
    fn invoke(&mut self, session: &RealSession, op: &ResourceOp) -> Result<ResourceResponse, ProfileError>;
}

/// Static dataset standing in for the device's real resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealFixture {
    pub contacts: Vec<ContactRecord>,
    pub messages: Vec<MessageRecord>,
    pub call_log: Vec<CallRecord>,
    pub location: GeoFix,
    pub wifi: Vec<WifiNetwork>,
    /// Cycled to fill captured frames.
    pub camera_tile: Vec<u8>,
    pub tone_hz: u32,
    pub files: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("fixture parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl RealFixture {
    pub fn default_fixture() -> Self {
        let contacts = vec![
            ContactRecord {
                name: "Amal Haddad".into(),
                number: "+970-59-123-4567".into(),
            },
            ContactRecord {
                name: "Lina Khoury".into(),
                number: "+970-59-765-4321".into(),
            },
            ContactRecord {
                name: "Rami Saleh".into(),
                number: "+970-56-222-3344".into(),
            },
        ];
        RealFixture {
            messages: vec![
                MessageRecord {
                    from: contacts[0].number.clone(),
                    body: "meeting moved to 10".into(),
                    at: 3_600,
                },
                MessageRecord {
                    from: contacts[2].number.clone(),
                    body: "package arrived".into(),
                    at: 50_000,
                },
            ],
            call_log: vec![
                CallRecord {
                    number: contacts[1].number.clone(),
                    at: 7_200,
                    duration_s: 312,
                },
                CallRecord {
                    number: contacts[0].number.clone(),
                    at: 40_000,
                    duration_s: 45,
                },
            ],
            contacts,
            location: GeoFix::new(31.53, 35.09),
            wifi: vec![
                WifiNetwork {
                    ssid: "HomeNet".into(),
                    bssid: "a4:2b:b0:11:22:33".into(),
                    rssi_dbm: -48,
                },
                WifiNetwork {
                    ssid: "Campus".into(),
                    bssid: "f0:9f:c2:44:55:66".into(),
                    rssi_dbm: -71,
                },
            ],
            camera_tile: (0..=255u8).step_by(17).collect(),
            tone_hz: 440,
            files: BTreeMap::from([(
                "/sdcard/notes.txt".to_string(),
                b"groceries: olives, bread".to_vec(),
            )]),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| FixtureError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FixtureError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("fixture serializes");
        text.push('\n');
        fs::write(path, text).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Serves `op` from the fixture. Same contract as [`ProfileRegistry::invoke`].
pub fn real_provider_invoke(
    fixture: &RealFixture,
    session: &RealSession,
    op: &ResourceOp,
) -> Result<ResourceResponse, ProfileError> {
    if op.resource() != session.resource {
        return Err(ProfileError::ClassMismatch {
            session: session.resource,
            op: op.resource(),
        });
    }
    Ok(match op {
        ResourceOp::CameraCapture { width, height } => {
            let len = *width as usize * *height as usize;
            let pixels = if fixture.camera_tile.is_empty() {
                vec![0; len]
            } else {
                fixture.camera_tile.iter().copied().cycle().take(len).collect()
            };
            ResourceResponse::Frame {
                width: *width,
                height: *height,
                pixels,
            }
        }
        ResourceOp::MicrophoneRead { duration_ms } => {
            let n = expected_samples(*duration_ms);
            let step = 2.0 * PI * fixture.tone_hz as f64 / SAMPLE_RATE_HZ as f64;
            let samples = (0..n).map(|i| ((i as f64 * step).sin() * 8000.0) as i16).collect();
            ResourceResponse::Audio {
                sample_rate: SAMPLE_RATE_HZ,
                samples,
            }
        }
        ResourceOp::ContactsQuery { prefix } => {
            let mut records: Vec<_> = fixture
                .contacts
                .iter()
                .filter(|c| c.name.starts_with(prefix.as_str()))
                .cloned()
                .collect();
            records.sort();
            ResourceResponse::Contacts { records }
        }
        ResourceOp::MessagesQuery { since_tick } => ResourceResponse::Messages {
            records: fixture
                .messages
                .iter()
                .filter(|m| m.at >= *since_tick)
                .cloned()
                .collect(),
        },
        ResourceOp::CallLogQuery { since_tick } => ResourceResponse::CallLog {
            records: fixture
                .call_log
                .iter()
                .filter(|c| c.at >= *since_tick)
                .cloned()
                .collect(),
        },
        ResourceOp::LocationRead => ResourceResponse::Location {
            fix: fixture.location,
        },
        ResourceOp::WifiScan => ResourceResponse::Wifi {
            networks: fixture.wifi.clone(),
        },
        ResourceOp::StorageRead { path } => ResourceResponse::Blob {
            path: path.clone(),
            // Missing files read as empty.
            bytes: fixture.files.get(path).cloned().unwrap_or_default(),
        },
    })
}

impl RealProvider for RealFixture {
    fn invoke(&mut self, session: &RealSession, op: &ResourceOp) -> Result<ResourceResponse, ProfileError> {
        real_provider_invoke(self, session, op)
    }
}
