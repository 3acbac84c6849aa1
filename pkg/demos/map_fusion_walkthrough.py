"""Two vehicles share their maps through one composed message.

Vehicle 7 can sense a piece of debris; vehicle 30, driving 400 m behind,
cannot. One full protocol pass runs below: sense, compose under a byte
budget, encode, decode, fuse. Afterwards vehicle 30 knows the debris,
reconstructed from the cubes that rode along in the frame.
"""

from csamsim import (ControllerState, CsamMessage, Direction, LocalMap,
                     ObjectKind, Rng, SelectionPolicy, Vehicle, WireFormat,
                     World, WorldObject, build_csam, decode, encode,
                     fuse_received, information_age, sense)

ROAD = 4000.0
fmt = WireFormat()
policy = SelectionPolicy()
rng = Rng(2, "fusion-demo")

v7 = Vehicle(id=7, direction=Direction.FORWARD, lane=0, position_m=1200.0,
             speed_mps=17.0, lateral_m=2.0)
v30 = Vehicle(id=30, direction=Direction.FORWARD, lane=1, position_m=800.0,
              speed_mps=18.0, lateral_m=6.0)
debris = WorldObject(object_id=900, kind=ObjectKind.UNKNOWN, center_x=1260.0,
                     center_y=0.0, extent_x=1.2, extent_y=0.8)
world = World([WorldObject.from_vehicle(v7), WorldObject.from_vehicle(v30),
               debris], road_length_m=ROAD)

map7 = LocalMap(owner_id=7)
map30 = LocalMap(owner_id=30)
for t in (0.0, 0.1, 0.2):       # a few ticks so history accumulates
    sense(map7, v7, world, now=t, radius_m=150.0)
    sense(map30, v30, world, now=t, radius_m=150.0)

print("before exchange:")
print(f"  vehicle 7 tracks  {sorted(map7.entries)}")
print(f"  vehicle 30 tracks {sorted(map30.entries)}")
age = information_age(map30, 900, now=0.2)
print(f"  debris age at vehicle 30: {age.age_s:.1f} s"
      f" (never seen: {age.never_seen})")

ctrl = ControllerState(l_opt=700, l_min=316, l_max=5400, gain=2000.0,
                       cbr_target=0.68)
msg = build_csam(map7, v7, ctrl, policy, fmt, now=0.2, road_length_m=ROAD,
                 rng=rng, sequence=1)
wire = encode(msg, fmt)
print()
print(f"vehicle 7 sends {len(wire)} bytes (budget {ctrl.l_opt}):"
      f" {len(msg.known)} known, {len(msg.unknown)} unknown"
      f" at {msg.resolution} cubes each")

received: CsamMessage = decode(wire, fmt)
fuse_received(map30, received, now=0.2)
print()
print("after fusing at vehicle 30:")
print(f"  vehicle 30 tracks {sorted(map30.entries)}")
entry = map30.entries[900]
print(f"  debris rebuilt at ({entry.center_x:.1f}, {entry.center_y:.1f}),"
      f" extent {entry.extent_x:.2f} x {entry.extent_y:.2f} m,"
      f" resolution {entry.resolution}")
age = information_age(map30, 900, now=0.2)
print(f"  debris age now: {age.age_s:.1f} s (never seen: {age.never_seen})")
