import csv

beta, gamma_rate = 0.32, 0.1
s, i, r = 499_900.0, 100.0, 0.0
n = s + i + r
with open("weekly_forecast.csv", "w", newline="") as out:
    writer = csv.writer(out)
    writer.writerow(["week", "susceptible", "infected", "recovered"])
    for week in range(1, 27):
        for _ in range(7):
            new_inf = beta * s * i / n
            new_rec = gamma_rate * i
            s, i, r = s - new_inf, i + new_inf - new_rec, r + new_rec
        writer.writerow([week, round(s), round(i), round(r)])
