# Generated by Django 4.1.13 on 2026-10-16 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(choices=[('calibrate', 'Calibrate'), ('run', 'Run'), ('sweep', 'Sweep'), ('verify', 'Verify')], max_length=20)),
                ('config_name', models.CharField(blank=True, max_length=200)),
                ('config_digest', models.CharField(db_index=True, max_length=64)),
                ('config', models.JSONField(default=dict)),
                ('summary', models.JSONField(blank=True, null=True)),
                ('exit_status', models.IntegerField(default=0)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
