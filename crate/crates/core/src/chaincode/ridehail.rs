//! The ride lifecycle functions.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest as _, Sha256};

use crate::canonical;
use crate::ledger::{StateKey, TxSimulator};

use super::geo::{distance_m, GeoPoint};
use super::{
    CallerInfo, ChaincodeConfig, ChaincodeContext, ChaincodeError, EventName, InvokeOutput,
    RideEvent, RideRecord, RideStatus, RideTimestamp, UserRecord, UserRole,
};

struct Exec<'a, 'b> {
    sim: TxSimulator<'a>,
    ctx: ChaincodeContext,
    cfg: &'b ChaincodeConfig,
    events: Vec<RideEvent>,
}

pub(super) fn dispatch(
    sim: TxSimulator<'_>,
    caller: &CallerInfo,
    function: &str,
    args: &[String],
    cfg: &ChaincodeConfig,
) -> Result<InvokeOutput, ChaincodeError> {
    // Functions that record a time take it as their trailing argument.
    let now = match function {
        "pickupRider" | "dropoffRider" => Some(arg(args, 2, "now")?.to_string()),
        _ => None,
    };
    let mut exec = Exec {
        sim,
        ctx: ChaincodeContext {
            caller: caller.clone(),
            now,
        },
        cfg,
        events: Vec::new(),
    };
    let response = match function {
        "registerUser" => exec.register_user(arg(args, 0, "password")?),
        "unregisterUser" => exec.unregister_user(),
        "upgradeToDriver" => exec.upgrade_to_driver(),
        "requestRide" => exec.request_ride(geo_arg(args, 0, "pickup")?),
        "acceptRide" => exec.accept_ride(&key_arg(args, 0)?),
        "setRideDestination" => {
            exec.set_ride_destination(&key_arg(args, 0)?, geo_arg(args, 1, "destination")?)
        }
        "pickupRider" => exec.pickup_rider(&key_arg(args, 0)?, geo_arg(args, 1, "driver_loc")?),
        "setCoRiderInformation" => {
            let event = match arg(args, 2, "event")? {
                "pickup" => CoRiderEvent::Pickup,
                "dropoff" => CoRiderEvent::Dropoff,
                other => {
                    return Err(ChaincodeError::BadArguments(format!(
                        "co-rider event must be pickup or dropoff, got {other:?}"
                    )))
                }
            };
            exec.set_corider_information(
                &key_arg(args, 0)?,
                arg(args, 1, "co_rider_uid")?,
                event,
                geo_arg(args, 3, "location")?,
            )
        }
        "dropoffRider" => exec.dropoff_rider(&key_arg(args, 0)?, geo_arg(args, 1, "driver_loc")?),
        "leaveDriver" => exec.leave_driver(&key_arg(args, 0)?),
        "getUserInfo" => exec.get_user_info(),
        "authenticate" => exec.authenticate(arg(args, 0, "password")?),
        other => Err(ChaincodeError::UnknownFunction(other.to_string())),
    }?;
    Ok(InvokeOutput {
        rwset: exec.sim.into_rwset(),
        response,
        events: exec.events,
    })
}

fn arg<'a>(args: &'a [String], idx: usize, name: &str) -> Result<&'a str, ChaincodeError> {
    args.get(idx)
        .map(String::as_str)
        .ok_or_else(|| ChaincodeError::BadArguments(format!("missing argument {idx} ({name})")))
}

fn geo_arg(args: &[String], idx: usize, name: &str) -> Result<GeoPoint, ChaincodeError> {
    GeoPoint::parse(arg(args, idx, name)?)
        .map_err(|e| ChaincodeError::BadArguments(format!("{name}: {e}")))
}

fn key_arg(args: &[String], idx: usize) -> Result<StateKey, ChaincodeError> {
    StateKey::parse(arg(args, idx, "ride_key")?)
        .map_err(|e| ChaincodeError::BadArguments(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CoRiderEvent {
    Pickup,
    Dropoff,
}

pub(crate) fn ride_id_for(uid: &str) -> String {
    format!("ID-{uid}")
}

/// Salt bytes for a user: deterministic per identity so every peer derives
/// the same record, unique per user because identities are unique.
pub(crate) fn salt_for(msp: &str, uid: &str) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"rhsim-salt-v1");
    h.update(msp.as_bytes());
    h.update(b"~");
    h.update(uid.as_bytes());
    h.finalize()[..16].to_vec()
}

pub(crate) fn password_hash(salt: &[u8], password: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt);
    h.update(password.as_bytes());
    hex::encode(h.finalize())
}

impl Exec<'_, '_> {
    fn caller_user_key(&self) -> StateKey {
        StateKey::user(&self.ctx.caller.msp, &self.ctx.caller.uid)
    }

    fn caller_ride_key(&self) -> StateKey {
        StateKey::ride_request(&self.ctx.caller.msp, &self.ctx.caller.uid)
    }

    fn get_record<T: DeserializeOwned>(&mut self, key: &StateKey) -> Option<T> {
        let bytes = self.sim.get(key)?;
        serde_json::from_slice(&bytes).ok()
    }

    fn put_record<T: Serialize>(&mut self, key: &StateKey, record: &T) {
        self.sim.put(key, canonical::canonical_bytes(record));
    }

    fn emit(&mut self, name: EventName, ride_key: &StateKey, payload: serde_json::Value) {
        self.events.push(RideEvent {
            name,
            ride_key: ride_key.clone(),
            payload,
        });
    }

    fn now(&self) -> Result<(String, RideTimestamp), ChaincodeError> {
        let raw = self
            .ctx
            .now
            .clone()
            .ok_or_else(|| ChaincodeError::BadArguments("missing timestamp argument".into()))?;
        let parsed = RideTimestamp::parse(&raw)?;
        Ok((raw, parsed))
    }

    /// The caller must be the assigned driver of `ride`.
    fn require_assigned_driver(&self, ride: &RideRecord) -> Result<(), ChaincodeError> {
        if ride.driver_id.as_deref() != Some(&ride_id_for(&self.ctx.caller.uid)) {
            return Err(ChaincodeError::NotAssignedDriver);
        }
        Ok(())
    }

    /// The caller must own `key`: same MSP and uid parts.
    fn require_owner(&self, key: &StateKey) -> Result<(), ChaincodeError> {
        if key.msp_part() != self.ctx.caller.msp.as_str() || key.uid_part() != self.ctx.caller.uid
        {
            return Err(ChaincodeError::NotOwner);
        }
        Ok(())
    }

    fn register_user(&mut self, password: &str) -> Result<Vec<u8>, ChaincodeError> {
        let key = self.caller_user_key();
        if self.sim.get(&key).is_some() {
            return Err(ChaincodeError::AlreadyRegistered);
        }
        let salt = salt_for(self.ctx.caller.msp.as_str(), &self.ctx.caller.uid);
        let record = UserRecord {
            pw_hash: password_hash(&salt, password),
            pw_salt: hex::encode(&salt),
            role: UserRole::Rider,
            ride_keys: Vec::new(),
        };
        self.put_record(&key, &record);
        Ok(key.to_string().into_bytes())
    }

    fn unregister_user(&mut self) -> Result<Vec<u8>, ChaincodeError> {
        let key = self.caller_user_key();
        if self.sim.get(&key).is_none() {
            return Err(ChaincodeError::NotRegistered);
        }
        if self.sim.get(&self.caller_ride_key()).is_some() {
            return Err(ChaincodeError::RideInProgress);
        }
        // Permanent rides stay: they are the audit trail.
        self.sim.delete(&key);
        Ok(Vec::new())
    }

    fn upgrade_to_driver(&mut self) -> Result<Vec<u8>, ChaincodeError> {
        let key = self.caller_user_key();
        let mut user: UserRecord = self
            .get_record(&key)
            .ok_or(ChaincodeError::NotRegistered)?;
        if user.role == UserRole::Driver {
            return Err(ChaincodeError::AlreadyDriver);
        }
        user.role = UserRole::Driver;
        self.put_record(&key, &user);
        Ok(Vec::new())
    }

    fn request_ride(&mut self, pickup: GeoPoint) -> Result<Vec<u8>, ChaincodeError> {
        let user_key = self.caller_user_key();
        if self.sim.get(&user_key).is_none() {
            return Err(ChaincodeError::NotRegistered);
        }
        let ride_key = self.caller_ride_key();
        if self.sim.get(&ride_key).is_some() {
            return Err(ChaincodeError::RideAlreadyActive);
        }
        let ride = RideRecord {
            ride_id: ride_id_for(&self.ctx.caller.uid),
            driver_id: None,
            status: RideStatus::Requested,
            pickup_loc: pickup.canonical(),
            dropoff_loc: None,
            pickup_time: None,
            dropoff_time: None,
            co_rider_id: None,
            co_rider_pickup_loc: None,
            co_rider_dropoff_loc: None,
        };
        self.put_record(&ride_key, &ride);
        self.emit(
            EventName::RideRequested,
            &ride_key,
            serde_json::json!({"ride_id": ride.ride_id, "pickup_loc": ride.pickup_loc}),
        );
        Ok(ride_key.to_string().into_bytes())
    }

    fn accept_ride(&mut self, ride_key: &StateKey) -> Result<Vec<u8>, ChaincodeError> {
        let user_key = self.caller_user_key();
        let user: UserRecord = self.get_record(&user_key).ok_or(ChaincodeError::NotADriver)?;
        if user.role != UserRole::Driver {
            return Err(ChaincodeError::NotADriver);
        }
        let mut ride: RideRecord = self
            .get_record(ride_key)
            .ok_or(ChaincodeError::RideNotFound)?;
        if ride.status != RideStatus::Requested {
            return Err(ChaincodeError::AlreadyAccepted);
        }
        ride.driver_id = Some(ride_id_for(&self.ctx.caller.uid));
        ride.status = RideStatus::Accepted;
        self.put_record(ride_key, &ride);
        self.emit(
            EventName::RideAccepted,
            ride_key,
            serde_json::json!({"ride_id": ride.ride_id, "driver_id": ride.driver_id}),
        );
        Ok(Vec::new())
    }

    /// The destination is supplied only after a driver has accepted, so
    /// acceptance can never be biased by where the rider is going.
    fn set_ride_destination(
        &mut self,
        ride_key: &StateKey,
        destination: GeoPoint,
    ) -> Result<Vec<u8>, ChaincodeError> {
        let mut ride: RideRecord = self
            .get_record(ride_key)
            .ok_or(ChaincodeError::RideNotFound)?;
        self.require_owner(ride_key)?;
        if ride.status != RideStatus::Accepted || ride.dropoff_loc.is_some() {
            return Err(ChaincodeError::WrongStatus);
        }
        ride.dropoff_loc = Some(destination.canonical());
        self.put_record(ride_key, &ride);
        Ok(Vec::new())
    }

    fn pickup_rider(
        &mut self,
        ride_key: &StateKey,
        driver_loc: GeoPoint,
    ) -> Result<Vec<u8>, ChaincodeError> {
        let mut ride: RideRecord = self
            .get_record(ride_key)
            .ok_or(ChaincodeError::RideNotFound)?;
        self.require_assigned_driver(&ride)?;
        if ride.status != RideStatus::Accepted || ride.pickup_time.is_some() {
            return Err(ChaincodeError::RideNotOngoing);
        }
        let pickup = GeoPoint::parse(&ride.pickup_loc)
            .map_err(|e| ChaincodeError::BadArguments(e.to_string()))?;
        if distance_m(driver_loc, pickup) > self.cfg.epsilon_m {
            return Err(ChaincodeError::WrongLocation);
        }
        let (now_raw, _) = self.now()?;
        ride.pickup_time = Some(now_raw);
        self.put_record(ride_key, &ride);
        self.emit(
            EventName::DriverArrived,
            ride_key,
            serde_json::json!({"ride_id": ride.ride_id}),
        );
        Ok(Vec::new())
    }

    /// Record a co-rider's pickup or dropoff location into the observer's
    /// ride object. Allowed only while the observer is onboard — picked up
    /// and not yet dropped off — so nobody ever holds a location they were
    /// not present to see.
    fn set_corider_information(
        &mut self,
        observer_ride_key: &StateKey,
        co_rider_uid: &str,
        event: CoRiderEvent,
        location: GeoPoint,
    ) -> Result<Vec<u8>, ChaincodeError> {
        let mut ride: RideRecord = self
            .get_record(observer_ride_key)
            .ok_or(ChaincodeError::RideNotFound)?;
        self.require_assigned_driver(&ride)?;
        if ride.pickup_time.is_none() || ride.dropoff_time.is_some() {
            return Err(ChaincodeError::ObserverNotPresent);
        }
        let co_rider_id = ride_id_for(co_rider_uid);
        match &ride.co_rider_id {
            None => ride.co_rider_id = Some(co_rider_id),
            Some(existing) if *existing == co_rider_id => {}
            // A ride object holds exactly one co-rider.
            Some(_) => return Err(ChaincodeError::FieldAlreadySet),
        }
        let slot = match event {
            CoRiderEvent::Pickup => &mut ride.co_rider_pickup_loc,
            CoRiderEvent::Dropoff => &mut ride.co_rider_dropoff_loc,
        };
        if slot.is_some() {
            return Err(ChaincodeError::FieldAlreadySet);
        }
        *slot = Some(location.canonical());
        self.put_record(observer_ride_key, &ride);
        Ok(Vec::new())
    }

    fn dropoff_rider(
        &mut self,
        ride_key: &StateKey,
        driver_loc: GeoPoint,
    ) -> Result<Vec<u8>, ChaincodeError> {
        let mut ride: RideRecord = self
            .get_record(ride_key)
            .ok_or(ChaincodeError::RideNotFound)?;
        self.require_assigned_driver(&ride)?;
        if ride.status == RideStatus::Completed {
            return Err(ChaincodeError::RideNotOngoing);
        }
        let pickup_time = match &ride.pickup_time {
            Some(t) => RideTimestamp::parse(t)?,
            None => return Err(ChaincodeError::NotPickedUp),
        };
        let dropoff_loc = ride
            .dropoff_loc
            .clone()
            .ok_or(ChaincodeError::NoDestination)?;
        let destination = GeoPoint::parse(&dropoff_loc)
            .map_err(|e| ChaincodeError::BadArguments(e.to_string()))?;
        if distance_m(driver_loc, destination) > self.cfg.epsilon_m {
            return Err(ChaincodeError::WrongLocation);
        }
        let (now_raw, now) = self.now()?;
        if now < pickup_time {
            return Err(ChaincodeError::InvalidTimestamp(format!(
                "dropoff {now_raw} precedes pickup"
            )));
        }
        ride.dropoff_time = Some(now_raw.clone());
        ride.status = RideStatus::Completed;
        self.put_record(ride_key, &ride);

        // Archive the driver's copy and index it in the driver's record.
        let driver_user_key = self.caller_user_key();
        let mut driver: UserRecord = self
            .get_record(&driver_user_key)
            .ok_or(ChaincodeError::NotRegistered)?;
        let perm_key =
            StateKey::permanent_ride(&self.ctx.caller.msp, &self.ctx.caller.uid, &now_raw)
                .map_err(|e| ChaincodeError::BadArguments(e.to_string()))?;
        if self.sim.get(&perm_key).is_some() {
            return Err(ChaincodeError::KeyCollision);
        }
        self.put_record(&perm_key, &ride);
        driver.ride_keys.push(perm_key.to_string());
        self.put_record(&driver_user_key, &driver);

        self.emit(
            EventName::RideEnding,
            ride_key,
            serde_json::json!({"ride_id": ride.ride_id}),
        );
        Ok(Vec::new())
    }

    /// Archive the rider's own copy of the completed ride and delete the
    /// in-flight object.
    fn leave_driver(&mut self, ride_key: &StateKey) -> Result<Vec<u8>, ChaincodeError> {
        let ride: RideRecord = self
            .get_record(ride_key)
            .ok_or(ChaincodeError::RideNotFound)?;
        self.require_owner(ride_key)?;
        if ride.status != RideStatus::Completed {
            return Err(ChaincodeError::RideNotCompleted);
        }
        let dropoff_time = ride
            .dropoff_time
            .clone()
            .ok_or(ChaincodeError::RideNotCompleted)?;
        let user_key = self.caller_user_key();
        let mut user: UserRecord = self
            .get_record(&user_key)
            .ok_or(ChaincodeError::NotRegistered)?;
        let perm_key =
            StateKey::permanent_ride(&self.ctx.caller.msp, &self.ctx.caller.uid, &dropoff_time)
                .map_err(|e| ChaincodeError::BadArguments(e.to_string()))?;
        if self.sim.get(&perm_key).is_some() {
            return Err(ChaincodeError::KeyCollision);
        }
        self.put_record(&perm_key, &ride);
        user.ride_keys.push(perm_key.to_string());
        self.put_record(&user_key, &user);
        self.sim.delete(ride_key);
        Ok(perm_key.to_string().into_bytes())
    }

    /// Returns the caller's record and nothing else: there is no argument
    /// through which another user could be named.
    fn get_user_info(&mut self) -> Result<Vec<u8>, ChaincodeError> {
        let key = self.caller_user_key();
        let user: UserRecord = self.get_record(&key).ok_or(ChaincodeError::NotRegistered)?;
        Ok(canonical::canonical_bytes(&user))
    }

    fn authenticate(&mut self, password: &str) -> Result<Vec<u8>, ChaincodeError> {
        let key = self.caller_user_key();
        let user: UserRecord = self.get_record(&key).ok_or(ChaincodeError::NotRegistered)?;
        let salt = hex::decode(&user.pw_salt)
            .map_err(|e| ChaincodeError::BadArguments(format!("stored salt: {e}")))?;
        let ok = password_hash(&salt, password) == user.pw_hash;
        Ok(if ok { b"true".to_vec() } else { b"false".to_vec() })
    }
}
